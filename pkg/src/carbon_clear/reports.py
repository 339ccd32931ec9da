"""Result records, CSV / JSON reports and the solution-file round trip."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .allocation import AllocationMatrix
from .clearing import CARBON, ClearingSolution, DualSolution, effective_case
from .errors import DimensionMismatch, SchemaError
from .model import SystemCase
from .pricing import carbon_adjusted_prices
from .properties import settle

SUMMARY_COLUMNS = (
    "label",
    "model",
    "tax",
    "objective",
    "utility",
    "carbon_cost",
    "gen_cost",
    "total_load",
    "total_emissions",
    "avg_emissions",
    "consumer_payments",
    "generator_revenues",
    "congestion_rent",
    "carbon_revenue",
)


@dataclass(frozen=True)
class SolveRecord:
    case: SystemCase
    solution: ClearingSolution
    duals: DualSolution
    label: str | float = ""


def summary_row(rec: SolveRecord) -> dict:
    """Flat, ordered row: totals, settlement, then per-agent dispatch, prices and emissions."""
    case, sol, duals = rec.case, rec.solution, rec.duals
    eff = effective_case(case, sol.model, sol.tax)
    prices = carbon_adjusted_prices(duals, eff, sol)
    money = settle(case, sol, duals)
    row = {
        "label": rec.label,
        "model": sol.model,
        "tax": sol.tax,
        "objective": sol.objective,
        "utility": sol.utility_total,
        "carbon_cost": sol.carbon_cost_total,
        "gen_cost": sol.gen_cost_total,
        "total_load": sol.total_load,
        "total_emissions": sol.total_emissions,
        "avg_emissions": sol.average_emissions,
        "consumer_payments": money.consumer_payments,
        "generator_revenues": money.generator_revenues,
        "congestion_rent": money.congestion_rent,
        "carbon_revenue": money.carbon_revenue,
    }
    for k, g in enumerate(case.generators):
        row[f"pg[{g.id}]"] = sol.p_g[k]
    for k, g in enumerate(case.generators):
        row[f"gen_price[{g.id}]"] = prices.gen_price[k]
    for k, d in enumerate(case.consumers):
        row[f"pd[{d.id}]"] = sol.p_d[k]
    for k, d in enumerate(case.consumers):
        row[f"load_price[{d.id}]"] = prices.load_price[k]
    for k, d in enumerate(case.consumers):
        row[f"e[{d.id}]"] = sol.e_d[k]
    return row


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, float, np.integer, np.floating)):
        text = f"{float(value):.6f}"
        return "0.000000" if text == "-0.000000" else text
    return str(value)


def rows_to_csv(rows: Sequence[dict]) -> str:
    header = list(SUMMARY_COLUMNS) if not rows else list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_fmt(r.get(k, "")) for k in header])
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict]:
    """Parse a CSV report back; numeric cells become floats."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v)
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def _arr(x) -> list[float]:
    return [float(v) for v in np.asarray(x).reshape(-1)]


def solution_document(rec: SolveRecord) -> dict:
    """Structured report mirroring the solution, price and settlement records."""
    case, sol, duals = rec.case, rec.solution, rec.duals
    eff = effective_case(case, sol.model, sol.tax)
    prices = carbon_adjusted_prices(duals, eff, sol)
    money = settle(case, sol, duals)
    return {
        "label": rec.label,
        "case": case.name,
        "generators": [g.id for g in case.generators],
        "consumers": [d.id for d in case.consumers],
        "buses": [b.id for b in case.buses],
        "solution": {
            "model": sol.model,
            "tax": sol.tax,
            "p_g": _arr(sol.p_g),
            "p_d": _arr(sol.p_d),
            "theta": _arr(sol.theta),
            "pi": [_arr(r) for r in sol.pi.pi],
            "e_d": _arr(sol.e_d),
            "flows": _arr(sol.flows),
            "objective": sol.objective,
            "utility_total": sol.utility_total,
            "carbon_cost_total": sol.carbon_cost_total,
            "gen_cost_total": sol.gen_cost_total,
            "total_emissions": sol.total_emissions,
            "average_emissions": sol.average_emissions,
        },
        "duals": {f.name: _arr(getattr(duals, f.name)) for f in fields(DualSolution)},
        "prices": {
            "gen_price": _arr(prices.gen_price),
            "load_price": _arr(prices.load_price),
            "lambda_p_normalized": _arr(prices.lambda_p_normalized),
            "lambda_g_normalized": _arr(prices.lambda_g_normalized),
            "lambda_d_normalized": _arr(prices.lambda_d_normalized),
            "congestion_rent": prices.congestion_rent,
            "carbon_revenue": prices.carbon_revenue,
        },
        "settlement": {
            "consumer_payments": money.consumer_payments,
            "generator_revenues": money.generator_revenues,
            "congestion_rent": money.congestion_rent,
            "carbon_revenue": money.carbon_revenue,
            "surplus": money.surplus,
            "generator_surplus": _arr(money.generator_surplus),
            "consumer_surplus": _arr(money.consumer_surplus),
        },
    }


def emit_report(results: Iterable[SolveRecord], fmt: str = "csv", path: str | Path | None = None) -> str:
    """Render records as a CSV summary (one row each) or as structured JSON."""
    records = list(results)
    if fmt == "csv":
        text = rows_to_csv([summary_row(r) for r in records])
    elif fmt in ("structured", "json"):
        text = json.dumps({"results": [solution_document(r) for r in records]}, indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r} (expected csv or structured)")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _vector(doc: dict, key: str, size: int, where: str) -> np.ndarray:
    if key not in doc:
        raise SchemaError(f"{where}.{key}: missing")
    arr = np.asarray(doc[key], dtype=float)
    if arr.shape != (size,):
        raise DimensionMismatch(f"{where}.{key}: expected {size} values, got shape {arr.shape}")
    return arr


def load_solution(doc: dict | str | Path, case: SystemCase) -> tuple[ClearingSolution, DualSolution]:
    """Rebuild a primal-dual pair from a structured report (its first record) or one record."""
    if not isinstance(doc, dict):
        doc = json.loads(Path(doc).read_text(encoding="utf-8"))
    if "results" in doc:
        if not doc["results"]:
            raise SchemaError("results: empty")
        doc = doc["results"][0]
    try:
        s, y = doc["solution"], doc["duals"]
    except KeyError as exc:
        raise SchemaError(f"{exc.args[0]}: missing") from None
    g, d, n, lines = case.n_gen, case.n_load, case.n_bus, len(case.lines)
    pi = np.asarray(s.get("pi", []), dtype=float).reshape(g, d) if g and d else np.zeros((g, d))
    theta = _vector(s, "theta", n, "solution")
    sol = ClearingSolution(
        p_g=_vector(s, "p_g", g, "solution"),
        p_d=_vector(s, "p_d", d, "solution"),
        theta=theta,
        pi=AllocationMatrix(pi, pi.sum(axis=1), pi.sum(axis=0)),
        e_d=_vector(s, "e_d", d, "solution"),
        flows=case.flow_matrix @ theta,
        objective=float(s["objective"]),
        utility_total=float(s["utility_total"]),
        carbon_cost_total=float(s["carbon_cost_total"]),
        gen_cost_total=float(s["gen_cost_total"]),
        model=s.get("model", CARBON),
        tax=float(s.get("tax", 0.0)),
    )
    sizes = {
        "lambda_p": n,
        "lambda_g": g,
        "lambda_d": d,
        "lambda_e": d,
        "eta_line_up": lines,
        "eta_line_dn": lines,
        "eta_g_up": g,
        "eta_g_dn": g,
        "eta_d_up": d,
        "eta_d_dn": d,
    }
    duals = DualSolution(**{k: _vector(y, k, size, "duals") for k, size in sizes.items()})
    return sol, duals
