"""Reading and writing cases: a JSON document or a directory of four CSV tables.

JSON layout::

    {"name": "t1",
     "buses": [{"id": "1", "reference": true}, ...],
     "lines": [{"from": "1", "to": "2", "susceptance": 1.0, "limit": null}, ...],
     "generators": [{"id": "g1", "bus": "1", "cost": 8, "emission": 0.6, "pmin": 0, "pmax": 20}, ...],
     "consumers": [{"id": "d1", "bus": "1", "utility": 18, "carbon_cost": 0, "pmin": 0, "pmax": 15}, ...]}

The CSV directory holds ``buses.csv``, ``lines.csv``, ``generators.csv`` and
``consumers.csv`` with the same field names as headers. An empty ``limit``
cell (or a missing / null ``limit`` key) means the line is unconstrained.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

from .errors import BadNumber, CaseSyntaxError, HeaderMismatch, MissingFile, SchemaError
from .model import Bus, Consumer, Generator, Line, SystemCase, validate_case

FIELDS = {
    "buses": ("id", "reference"),
    "lines": ("from", "to", "susceptance", "limit"),
    "generators": ("id", "bus", "cost", "emission", "pmin", "pmax"),
    "consumers": ("id", "bus", "utility", "carbon_cost", "pmin", "pmax"),
}
OPTIONAL = {"buses": {"reference"}, "lines": {"limit"}, "generators": set(), "consumers": set()}
_TRUE = {"true", "1", "yes", "y"}
_FALSE = {"false", "0", "no", "n", ""}


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _text(value: Any, where: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise SchemaError(f"{where}: expected a string id, got {value!r}")
    return str(value)


def _records(doc: dict, table: str) -> list[dict]:
    if table not in doc:
        raise SchemaError(f"{table}: missing required list")
    rows = doc[table]
    if not isinstance(rows, list):
        raise SchemaError(f"{table}: expected a list")
    out = []
    for k, row in enumerate(rows):
        where = f"{table}[{k}]"
        if not isinstance(row, dict):
            raise SchemaError(f"{where}: expected an object")
        unknown = set(row) - set(FIELDS[table])
        if unknown:
            raise SchemaError(f"{where}.{sorted(unknown)[0]}: unknown field")
        for name in FIELDS[table]:
            if name not in row and name not in OPTIONAL[table]:
                raise SchemaError(f"{where}.{name}: missing required field")
        out.append(row)
    return out


def case_from_dict(doc: Any, default_name: str = "case") -> SystemCase:
    """Build and validate a case from an already-decoded document."""
    if not isinstance(doc, dict):
        raise SchemaError("document: expected an object at the top level")
    buses = []
    for k, r in enumerate(_records(doc, "buses")):
        ref = r.get("reference", False)
        if not isinstance(ref, bool):
            raise SchemaError(f"buses[{k}].reference: expected true or false")
        buses.append(Bus(_text(r["id"], f"buses[{k}].id"), ref))
    lines = []
    for k, r in enumerate(_records(doc, "lines")):
        w = f"lines[{k}]"
        limit = r.get("limit")
        lines.append(
            Line(
                _text(r["from"], f"{w}.from"),
                _text(r["to"], f"{w}.to"),
                _number(r["susceptance"], f"{w}.susceptance"),
                None if limit is None else _number(limit, f"{w}.limit"),
            )
        )
    gens = []
    for k, r in enumerate(_records(doc, "generators")):
        w = f"generators[{k}]"
        gens.append(
            Generator(
                _text(r["id"], f"{w}.id"),
                _text(r["bus"], f"{w}.bus"),
                _number(r["cost"], f"{w}.cost"),
                _number(r["emission"], f"{w}.emission"),
                _number(r["pmin"], f"{w}.pmin"),
                _number(r["pmax"], f"{w}.pmax"),
            )
        )
    loads = []
    for k, r in enumerate(_records(doc, "consumers")):
        w = f"consumers[{k}]"
        loads.append(
            Consumer(
                _text(r["id"], f"{w}.id"),
                _text(r["bus"], f"{w}.bus"),
                _number(r["utility"], f"{w}.utility"),
                _number(r["carbon_cost"], f"{w}.carbon_cost"),
                _number(r["pmin"], f"{w}.pmin"),
                _number(r["pmax"], f"{w}.pmax"),
            )
        )
    name = doc.get("name", default_name)
    if not isinstance(name, str):
        raise SchemaError("name: expected a string")
    return validate_case(SystemCase(name, buses, lines, gens, loads))


def case_to_dict(case: SystemCase) -> dict:
    return {
        "name": case.name,
        "buses": [{"id": b.id, "reference": b.is_reference} for b in case.buses],
        "lines": [{"from": l.from_bus, "to": l.to_bus, "susceptance": l.susceptance, "limit": l.limit} for l in case.lines],
        "generators": [
            {"id": g.id, "bus": g.bus, "cost": g.cost, "emission": g.emission, "pmin": g.p_min, "pmax": g.p_max}
            for g in case.generators
        ],
        "consumers": [
            {"id": d.id, "bus": d.bus, "utility": d.utility, "carbon_cost": d.carbon_cost, "pmin": d.p_min, "pmax": d.p_max}
            for d in case.consumers
        ],
    }


def parse_case(source: str | Path) -> SystemCase:
    """Parse a JSON case from a file path or from the document text itself."""
    name = "case"
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        path = Path(source)
        if not path.is_file():
            raise MissingFile(f"case file not found: {path}")
        text = path.read_text(encoding="utf-8")
        name = path.stem
    else:
        text = str(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return case_from_dict(doc, default_name=name)


def dump_case(case: SystemCase, path: str | Path | None = None) -> str:
    """Serialize to JSON text (written to ``path`` when given)."""
    text = json.dumps(case_to_dict(case), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# CSV directory
# ---------------------------------------------------------------------------


def _read_table(directory: Path, table: str) -> list[dict[str, str]]:
    path = directory / f"{table}.csv"
    if not path.is_file():
        raise MissingFile(f"missing {path.name} in {directory}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [f for f in FIELDS[table] if f not in header and f not in OPTIONAL[table]]
        extra = [h for h in header if h not in FIELDS[table]]
        if missing or extra:
            detail = f"missing {missing}" if missing else f"unexpected {extra}"
            raise HeaderMismatch(f"{path.name}: header {detail}")
        return [{k.strip(): (v or "").strip() for k, v in row.items() if k is not None} for row in reader]


def _csv_number(row: dict, column: str, table: str, line: int, optional: bool = False) -> float | None:
    raw = row.get(column, "")
    if raw == "" and optional:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise BadNumber(f"{table}.csv row {line}, column {column!r}: not a number: {raw!r}", line, column) from None
    if math.isnan(value):
        raise BadNumber(f"{table}.csv row {line}, column {column!r}: NaN", line, column)
    return value


def parse_case_csv(directory: str | Path) -> SystemCase:
    """Read a case from a directory with one CSV file per table."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFile(f"not a directory: {directory}")
    # data rows start on file line 2
    buses = []
    for k, r in enumerate(_read_table(directory, "buses"), start=2):
        flag = r.get("reference", "").lower()
        if flag not in _TRUE | _FALSE:
            raise BadNumber(f"buses.csv row {k}, column 'reference': expected true/false, got {flag!r}", k, "reference")
        buses.append(Bus(r["id"], flag in _TRUE))
    lines = [
        Line(r["from"], r["to"], _csv_number(r, "susceptance", "lines", k), _csv_number(r, "limit", "lines", k, True))
        for k, r in enumerate(_read_table(directory, "lines"), start=2)
    ]
    gens = [
        Generator(r["id"], r["bus"], *(_csv_number(r, c, "generators", k) for c in ("cost", "emission", "pmin", "pmax")))
        for k, r in enumerate(_read_table(directory, "generators"), start=2)
    ]
    loads = [
        Consumer(r["id"], r["bus"], *(_csv_number(r, c, "consumers", k) for c in ("utility", "carbon_cost", "pmin", "pmax")))
        for k, r in enumerate(_read_table(directory, "consumers"), start=2)
    ]
    return validate_case(SystemCase(directory.name, buses, lines, gens, loads))


def write_case_csv(case: SystemCase, directory: str | Path) -> Path:
    """Write the four CSV tables; floats use ``repr`` so the round trip is exact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = case_to_dict(case)
    for table, fields in FIELDS.items():
        with (directory / f"{table}.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fields)
            for row in doc[table]:
                writer.writerow(["" if row[f] is None else _cell(row[f]) for f in fields])
    return directory


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
