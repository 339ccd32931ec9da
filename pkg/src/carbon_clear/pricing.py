"""Carbon-adjusted prices, the dual gauge, and the ordering of carbon adjustments.

Generators are paid ``lambda_P + lambda_G`` at their bus and consumers pay
``lambda_P - lambda_D``. Only these sums are unique: shifting
``(lambda_P, lambda_G, lambda_D)`` by ``(+t, -t, +t)`` yields another optimal
dual. :func:`normalize_gauge` picks the representative whose largest
generator adjustment is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .clearing import ClearingSolution, DualSolution, effective_case
from .errors import DimensionMismatch, EmptyGeneratorSet
from .model import SystemCase


@dataclass(frozen=True)
class PriceReport:
    gen_price: np.ndarray
    load_price: np.ndarray
    lambda_p_normalized: np.ndarray
    lambda_g_normalized: np.ndarray
    lambda_d_normalized: np.ndarray
    congestion_rent: float | None = None
    carbon_revenue: float | None = None


def normalize_gauge(duals: DualSolution) -> DualSolution:
    """Shift the multipliers so that ``max(lambda_G) == 0``; prices are unchanged."""
    if duals.lambda_g.size == 0:
        raise EmptyGeneratorSet("gauge normalization needs at least one generator")
    return duals.shifted(float(np.max(duals.lambda_g)))


def _check_dims(duals: DualSolution, case: SystemCase) -> None:
    if (
        duals.lambda_p.size != case.n_bus
        or duals.lambda_g.size != case.n_gen
        or duals.lambda_d.size != case.n_load
    ):
        raise DimensionMismatch("dual solution does not match the case dimensions")


def gen_prices(duals: DualSolution, case: SystemCase) -> np.ndarray:
    return duals.lambda_p[case.gen_bus] + duals.lambda_g


def load_prices(duals: DualSolution, case: SystemCase) -> np.ndarray:
    return duals.lambda_p[case.load_bus] - duals.lambda_d


def congestion_rent(duals: DualSolution, case: SystemCase, sol: ClearingSolution) -> float:
    """Nodal price times net withdrawal, summed over buses (zero without congestion)."""
    return float(duals.lambda_p[case.load_bus] @ sol.p_d - duals.lambda_p[case.gen_bus] @ sol.p_g)


def carbon_adjusted_prices(
    duals: DualSolution, case: SystemCase, sol: ClearingSolution | None = None
) -> PriceReport:
    """Per-agent carbon-adjusted prices plus the gauge-normalized decomposition.

    With ``sol`` given, the congestion rent and the total carbon revenue
    ``c_D . E_D`` are filled in as well.
    """
    _check_dims(duals, case)
    norm = normalize_gauge(duals) if case.n_gen else duals
    rent = revenue = None
    if sol is not None:
        rent = congestion_rent(duals, case, sol)
        revenue = float(effective_case(case, sol.model, sol.tax).carbon_cost @ sol.e_d)
    return PriceReport(
        gen_price=gen_prices(duals, case),
        load_price=load_prices(duals, case),
        lambda_p_normalized=norm.lambda_p.copy(),
        lambda_g_normalized=norm.lambda_g.copy(),
        lambda_d_normalized=norm.lambda_d.copy(),
        congestion_rent=rent,
        carbon_revenue=revenue,
    )


@dataclass(frozen=True)
class OrderingViolation:
    kind: str  # "generator" or "consumer"
    should_be_higher: str  # agent id whose adjustment should not be the smaller one
    other: str
    amount: float

    def __str__(self) -> str:
        return f"{self.kind}: adjustment of {self.should_be_higher} falls {self.amount:.3g} below {self.other}"


@dataclass(frozen=True)
class OrderingReport:
    violations: list[OrderingViolation]

    @property
    def passed(self) -> bool:
        return not self.violations


def _pairwise_violations(keys, values, tol, ids, kind):
    """Pairs where ``key_a <= key_b`` but ``value_a < value_b - tol``."""
    keys, values = np.asarray(keys, float), np.asarray(values, float)
    bad = (keys[:, None] <= keys[None, :]) & (values[:, None] < values[None, :] - tol)
    np.fill_diagonal(bad, False)
    return [
        OrderingViolation(kind, ids[a], ids[b], float(values[b] - values[a])) for a, b in zip(*np.nonzero(bad))
    ]


def check_ordering(prices: PriceReport, case: SystemCase, tol: float = 1e-6, *, model_case: SystemCase | None = None) -> OrderingReport:
    """Check that cleaner generators and more carbon-averse consumers get the larger adjustment.

    Generator adjustments must not increase with the emission factor, and
    consumer adjustments must not increase with the carbon cost; ``tol`` is
    an absolute slack in $/MWh. Pass ``model_case`` when the prices come from
    a carbon-agnostic or taxed solve (see :func:`effective_case`).
    """
    ref = model_case or case
    viol = _pairwise_violations(
        ref.emission, prices.lambda_g_normalized, tol, [g.id for g in case.generators], "generator"
    )
    # lambda_D must fall as c_D rises: order consumers by -c_D
    viol += _pairwise_violations(
        -ref.carbon_cost, -prices.lambda_d_normalized, tol, [d.id for d in case.consumers], "consumer"
    )
    return OrderingReport(viol)


@dataclass(frozen=True)
class GapCheck:
    kind: str  # "generators" (sharing a consumer) or "consumers" (sharing a generator)
    first: str
    second: str
    partner: str
    expected: float
    actual: float
    tol: float

    @property
    def ok(self) -> bool:
        return abs(self.expected - self.actual) <= self.tol


def adjustment_gaps(
    sol: ClearingSolution, duals: DualSolution, case: SystemCase, tol: float = 1e-6, served_tol: float = 1e-6
) -> list[GapCheck]:
    """Pairwise adjustment identities for agents that share an allocation partner.

    Two generators serving the same consumer ``l`` must satisfy
    ``lambda_G2 - lambda_G1 = c_l (e_1 - e_2)``; two consumers served by the
    same generator ``r`` must satisfy ``lambda_D2 - lambda_D1 = e_r (c_1 - c_2)``.
    """
    eff = effective_case(case, sol.model, sol.tax)
    pi = sol.pi.pi
    e, c = eff.emission, eff.carbon_cost
    lg, ld = duals.lambda_g, duals.lambda_d
    checks: list[GapCheck] = []
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)) * float(np.max(e, initial=0.0)))
    for l in range(case.n_load):
        serving = np.flatnonzero(pi[:, l] > served_tol)
        for g1, g2 in combinations(serving, 2):
            checks.append(
                GapCheck(
                    "generators",
                    case.generators[g1].id,
                    case.generators[g2].id,
                    case.consumers[l].id,
                    expected=float(c[l] * (e[g1] - e[g2])),
                    actual=float(lg[g2] - lg[g1]),
                    tol=tol * scale,
                )
            )
    for r in range(case.n_gen):
        served = np.flatnonzero(pi[r, :] > served_tol)
        for d1, d2 in combinations(served, 2):
            checks.append(
                GapCheck(
                    "consumers",
                    case.consumers[d1].id,
                    case.consumers[d2].id,
                    case.generators[r].id,
                    expected=float(e[r] * (c[d1] - c[d2])),
                    actual=float(ld[d2] - ld[d1]),
                    tol=tol * scale,
                )
            )
    return checks
