"""Equilibrium audits: KKT residuals and per-agent best responses under posted prices.

The centralized optimum is a market equilibrium when, at the carbon-adjusted
prices, no generator, consumer, transmission owner or carbon manager can do
better on its own and every bus balances. The agent problems are linear
over a box (generators, consumers), an LP over angles (transmission owner)
and a transportation problem (carbon manager); each check reports the gap
between the agent's optimal value and the value of the candidate point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .allocation import MARGINAL_RTOL, allocate_greedy, allocation_cost
from .clearing import ClearingSolution, DualSolution, dual_objective, effective_case
from .errors import DimensionMismatch, MarginalMismatch
from .model import Consumer, Generator, SystemCase
from .pricing import gen_prices, load_prices


def _scales(case: SystemCase) -> tuple[float, float, float]:
    """Power scale (MW), price scale ($/MWh) and angle-row scale used to make residuals relative."""
    power = [1.0, *case.gen_max, *case.load_max, *(x for x in case.line_limit if np.isfinite(x))]
    price = [1.0, *np.abs(case.gen_cost), *np.abs(case.utility)]
    if case.n_gen and case.n_load:
        price.append(float(case.carbon_cost.max() * case.emission.max()))
    lap = np.abs(case.incidence) @ case.susceptance if len(case.lines) else np.zeros(1)
    return float(max(power)), float(max(price)), float(max(1.0, lap.max()))


@dataclass
class ResidualReport:
    primal: dict[str, np.ndarray]
    dual: dict[str, np.ndarray]
    complementarity: dict[str, np.ndarray]
    scaled_max: dict[str, float]
    duality_gap: float
    tol: float
    max_residual: float = field(init=False)
    worst: str = field(init=False)

    def __post_init__(self) -> None:
        if self.scaled_max:
            self.worst, self.max_residual = max(self.scaled_max.items(), key=lambda kv: kv[1])
        else:
            self.worst, self.max_residual = "", 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def failures(self) -> list[str]:
        return [f"{k}: {v:.3e}" for k, v in self.scaled_max.items() if v > self.tol]


def kkt_residuals(case: SystemCase, sol: ClearingSolution, duals: DualSolution, tol: float = 1e-6) -> ResidualReport:
    """Evaluate primal feasibility, dual feasibility and complementary slackness.

    Raw residuals are absolute (equalities), ``max(0, violation)``
    (inequalities) or ``|multiplier * slack|`` (complementarity). Pass/fail
    uses residuals divided by the case's power scale, price scale, or their
    product, so the tolerance is relative.
    """
    eff = effective_case(case, sol.model, sol.tax)
    g, d, n = case.n_gen, case.n_load, case.n_bus
    if sol.p_g.size != g or sol.p_d.size != d or sol.theta.size != n or sol.pi.pi.shape != (g, d):
        raise DimensionMismatch("solution does not match the case dimensions")
    if duals.lambda_p.size != n or duals.lambda_g.size != g or duals.lambda_d.size != d:
        raise DimensionMismatch("dual solution does not match the case dimensions")
    power, price, angle = _scales(eff)

    flows = case.flow_matrix @ sol.theta
    pi = sol.pi.pi
    out = case.incidence @ flows
    inj_g = np.bincount(case.gen_bus, weights=sol.p_g, minlength=n)
    inj_d = np.bincount(case.load_bus, weights=sol.p_d, minlength=n)
    lim = np.isfinite(case.line_limit)
    cap = np.where(lim, case.line_limit, 0.0)

    primal = {
        "balance": inj_d + out - inj_g,
        "line_up": np.where(lim, np.maximum(0.0, flows - cap), 0.0),
        "line_dn": np.where(lim, np.maximum(0.0, -cap - flows), 0.0),
        "gen_min": np.maximum(0.0, case.gen_min - sol.p_g),
        "gen_max": np.maximum(0.0, sol.p_g - case.gen_max),
        "load_min": np.maximum(0.0, case.load_min - sol.p_d),
        "load_max": np.maximum(0.0, sol.p_d - case.load_max),
        "theta_ref": np.array([sol.theta[case.reference_index]]),
        "alloc_gen": pi.sum(axis=1) - sol.p_g,
        "alloc_load": pi.sum(axis=0) - sol.p_d,
        "emission": sol.e_d - eff.emission @ pi,
        "pi_nonneg": np.maximum(0.0, -pi),
    }

    lp, lg, ld, le = duals.lambda_p, duals.lambda_g, duals.lambda_d, duals.lambda_e
    pair = lg[:, None] + ld[None, :] + le[None, :] * eff.emission[:, None]
    non_ref = np.arange(n) != case.reference_index
    theta_stat = -(case.incidence @ (case.susceptance * (lp[case.line_from] - lp[case.line_to])))
    theta_stat = theta_stat + case.incidence @ (case.susceptance * (duals.eta_line_dn - duals.eta_line_up))
    etas = np.concatenate(
        [duals.eta_g_up, duals.eta_g_dn, duals.eta_d_up, duals.eta_d_dn, duals.eta_line_up, duals.eta_line_dn]
    )
    dual = {
        "stat_pg": -eff.gen_cost + lp[case.gen_bus] + lg - duals.eta_g_up + duals.eta_g_dn,
        "stat_pd": eff.utility - lp[case.load_bus] + ld - duals.eta_d_up + duals.eta_d_dn,
        "stat_theta": np.where(non_ref, theta_stat, 0.0),
        "stat_pi": np.maximum(0.0, -pair),
        "stat_e": le - eff.carbon_cost,
        "eta_nonneg": np.maximum(0.0, -etas),
        "eta_unlimited": np.where(lim, 0.0, np.abs(duals.eta_line_up) + np.abs(duals.eta_line_dn)),
    }

    comp = {
        "line_up": np.where(lim, duals.eta_line_up * (cap - flows), 0.0),
        "line_dn": np.where(lim, duals.eta_line_dn * (cap + flows), 0.0),
        "gen_up": duals.eta_g_up * (case.gen_max - sol.p_g),
        "gen_dn": duals.eta_g_dn * (sol.p_g - case.gen_min),
        "load_up": duals.eta_d_up * (case.load_max - sol.p_d),
        "load_dn": duals.eta_d_dn * (sol.p_d - case.load_min),
        "pi": pi * pair,
    }

    primal_obj = float(eff.utility @ sol.p_d - eff.carbon_cost @ sol.e_d - eff.gen_cost @ sol.p_g)
    gap = abs(primal_obj - dual_objective(case, duals))

    def worst(arr, scale):
        arr = np.abs(np.asarray(arr, dtype=float))
        return float(arr.max() / scale) if arr.size else 0.0

    scaled = {}
    for k, v in primal.items():
        scaled[f"primal.{k}"] = worst(v, power)
    for k, v in dual.items():
        scaled[f"dual.{k}"] = worst(v, price * angle if k == "stat_theta" else price)
    for k, v in comp.items():
        scaled[f"complementarity.{k}"] = worst(v, power * price)
    scaled["duality_gap"] = gap / (power * price * max(1, g + d))
    return ResidualReport(primal, dual, comp, scaled, gap, tol)


# ---------------------------------------------------------------------------
# agent best responses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BestResponse:
    agent: str
    margin: float  # $/MWh earned per MW of the decision
    interval: tuple[float, float]  # optimal action set
    optimal_value: float
    candidate_value: float | None

    @property
    def gap(self) -> float:
        if self.candidate_value is None:
            return 0.0
        return self.optimal_value - self.candidate_value


def _box_response(agent: str, margin: float, lo: float, hi: float, dispatch, tol: float) -> BestResponse:
    if margin > tol:
        interval = (hi, hi)
    elif margin < -tol:
        interval = (lo, lo)
    else:
        interval = (lo, hi)
    if abs(margin) <= tol:
        best = margin * dispatch if dispatch is not None else margin * hi
    else:
        best = margin * interval[0]
    cand = None if dispatch is None else margin * float(dispatch)
    return BestResponse(agent, float(margin), interval, float(best), cand)


def best_response_generator(gen: Generator, gen_price: float, dispatch: float | None = None, tol: float = 1e-9) -> BestResponse:
    """Profit-maximizing output for a price taker paid ``gen_price`` per MWh."""
    return _box_response(gen.id, gen_price - gen.cost, gen.p_min, gen.p_max, dispatch, tol)


def best_response_consumer(consumer: Consumer, load_price: float, consumption: float | None = None, tol: float = 1e-9) -> BestResponse:
    """Surplus-maximizing consumption for a price taker charged ``load_price`` per MWh."""
    return _box_response(consumer.id, consumer.utility - load_price, consumer.p_min, consumer.p_max, consumption, tol)


@dataclass(frozen=True)
class TransmissionCheck:
    candidate_value: float  # congestion rent earned with the candidate angles
    optimal_value: float
    unpriced_spread: float  # price spread along directions no limit can stop

    @property
    def gap(self) -> float:
        return self.optimal_value - self.candidate_value


def transmission_owner_check(theta, lambda_p, case: SystemCase, tol: float = 1e-6) -> TransmissionCheck:
    """Compare the candidate angles with the transmission owner's optimal arbitrage.

    The owner buys at the sending bus and sells at the receiving bus, earning
    ``sum_l (lambda_to - lambda_from) * flow_l`` subject to the line limits and
    the reference angle. The owner's LP is solved exactly (flows in a meshed
    network are coupled through the angles, so a per-line test is not enough).
    Spreads that no limit can cap make the owner's profit unbounded and show
    up as ``unpriced_spread`` with an infinite optimal value.
    """
    theta = np.asarray(theta, dtype=float)
    lambda_p = np.asarray(lambda_p, dtype=float)
    if theta.size != case.n_bus or lambda_p.size != case.n_bus:
        raise DimensionMismatch("angles / prices do not match the bus count")
    if not case.lines:
        return TransmissionCheck(0.0, 0.0, 0.0)
    spread = lambda_p[case.line_to] - lambda_p[case.line_from]
    fm = case.flow_matrix
    candidate = float(spread @ (fm @ theta))
    grad = fm.T @ spread

    lim = case.limited_lines
    ref_row = np.zeros((1, case.n_bus))
    ref_row[0, case.reference_index] = 1.0
    basis = np.vstack([fm[lim], ref_row])
    coef, *_ = np.linalg.lstsq(basis.T, grad, rcond=None)
    projected = basis.T @ coef
    leftover = float(np.abs(grad - projected).max())
    price_scale = max(1.0, float(np.abs(lambda_p).max()))
    if leftover > tol * price_scale * max(1.0, float(case.susceptance.max())):
        return TransmissionCheck(candidate, float("inf"), leftover)
    if lim.size == 0:
        return TransmissionCheck(candidate, 0.0, leftover)

    bounds = [(None, None)] * case.n_bus
    bounds[case.reference_index] = (0.0, 0.0)
    a_ub = np.vstack([fm[lim], -fm[lim]])
    b_ub = np.concatenate([case.line_limit[lim]] * 2)
    res = linprog(-projected, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return TransmissionCheck(candidate, float("inf"), leftover)
    best = float(spread @ (fm @ res.x))
    return TransmissionCheck(candidate, max(best, candidate), leftover)


def price_setter_residual(case: SystemCase, sol: ClearingSolution) -> np.ndarray:
    """Per-bus imbalance: consumption plus net outflow minus generation."""
    n = case.n_bus
    out = case.incidence @ (case.flow_matrix @ sol.theta)
    return (
        np.bincount(case.load_bus, weights=sol.p_d, minlength=n)
        + out
        - np.bincount(case.gen_bus, weights=sol.p_g, minlength=n)
    )


@dataclass(frozen=True)
class CarbonManagerCheck:
    allocation_cost: float
    optimal_cost: float
    max_tight_violation: float  # |lambda_G + lambda_D + c e| on allocated pairs
    max_pair_violation: float  # max(0, -(lambda_G + lambda_D + c e)) over all pairs

    @property
    def gap(self) -> float:
        return self.allocation_cost - self.optimal_cost


def carbon_manager_check(sol: ClearingSolution, duals: DualSolution, case: SystemCase, served_tol: float = 1e-9) -> CarbonManagerCheck:
    """Compare the allocation's carbon cost with the optimal transportation cost at the same marginals.

    The greedy Monge fill gives the optimum. The dual certificate (pairwise
    feasibility plus tightness on allocated pairs) is reported alongside, so
    both views of carbon-manager optimality can be checked against each other.
    """
    eff = effective_case(case, sol.model, sol.tax)
    pi = sol.pi.pi
    scale = 1.0 + float(sol.p_g.sum())
    if (
        np.abs(pi.sum(axis=1) - sol.p_g).max(initial=0.0) > MARGINAL_RTOL * scale
        or np.abs(pi.sum(axis=0) - sol.p_d).max(initial=0.0) > MARGINAL_RTOL * scale
    ):
        raise MarginalMismatch("allocation marginals do not match the dispatch")
    actual = allocation_cost(pi, eff.emission, eff.carbon_cost)
    oracle = allocate_greedy(sol.p_g, sol.p_d, eff.emission, eff.carbon_cost)
    optimum = allocation_cost(oracle, eff.emission, eff.carbon_cost)
    pair = duals.lambda_g[:, None] + duals.lambda_d[None, :] + eff.carbon_cost[None, :] * eff.emission[:, None]
    tight = np.abs(pair[pi > served_tol]).max(initial=0.0)
    loose = np.maximum(0.0, -pair).max(initial=0.0)
    return CarbonManagerCheck(actual, optimum, float(tight), float(loose))


@dataclass
class BestResponseReport:
    generators: list[BestResponse]
    consumers: list[BestResponse]
    transmission: TransmissionCheck
    carbon_manager: CarbonManagerCheck
    imbalance: np.ndarray
    tol: float
    value_scale: float
    power_scale: float
    price_scale: float

    def gaps(self) -> dict[str, float]:
        out = {f"generator:{r.agent}": r.gap for r in self.generators}
        out.update({f"consumer:{r.agent}": r.gap for r in self.consumers})
        out["transmission_owner"] = self.transmission.gap
        out["carbon_manager"] = self.carbon_manager.gap
        return out

    @property
    def max_gap(self) -> float:
        return max(self.gaps().values(), default=0.0)

    @property
    def min_gap(self) -> float:
        return min(self.gaps().values(), default=0.0)

    @property
    def passed(self) -> bool:
        limit = self.tol * self.value_scale
        return (
            self.max_gap <= limit
            and self.min_gap >= -limit
            and float(np.abs(self.imbalance).max(initial=0.0)) <= self.tol * self.power_scale
            and self.carbon_manager.max_tight_violation <= self.tol * self.price_scale
            and self.carbon_manager.max_pair_violation <= self.tol * self.price_scale
        )


@dataclass
class EquilibriumReport:
    best_responses: BestResponseReport
    residuals: ResidualReport
    objective: float

    @property
    def passed(self) -> bool:
        return self.best_responses.passed and self.residuals.passed


def verify_equilibrium(case: SystemCase, sol: ClearingSolution, duals: DualSolution, tol: float = 1e-6) -> EquilibriumReport:
    """Run every agent check and the full KKT audit on a primal-dual pair."""
    eff = effective_case(case, sol.model, sol.tax)
    power, price, _ = _scales(eff)
    margin_tol = tol * price
    gp, lp_ = gen_prices(duals, eff), load_prices(duals, eff)
    gens = [
        best_response_generator(g, float(gp[k]), float(sol.p_g[k]), margin_tol) for k, g in enumerate(eff.generators)
    ]
    loads = [
        best_response_consumer(d, float(lp_[k]), float(sol.p_d[k]), margin_tol) for k, d in enumerate(eff.consumers)
    ]
    try:
        manager = carbon_manager_check(sol, duals, case, served_tol=tol * power)
    except MarginalMismatch:
        # the allocation does not even cover the dispatch; the residual report says where
        manager = CarbonManagerCheck(float("inf"), 0.0, float("inf"), float("inf"))
    br = BestResponseReport(
        generators=gens,
        consumers=loads,
        transmission=transmission_owner_check(sol.theta, duals.lambda_p, eff, tol),
        carbon_manager=manager,
        imbalance=price_setter_residual(eff, sol),
        tol=tol,
        value_scale=power * price * max(1, case.n_gen + case.n_load),
        power_scale=power,
        price_scale=price,
    )
    return EquilibriumReport(br, kkt_residuals(case, sol, duals, tol), sol.objective)
