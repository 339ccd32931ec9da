"""Centralized carbon-aware market clearing and its dual.

The primal is a DC-OPF whose objective subtracts consumer carbon costs and
whose extra constraints allocate every generator's output to consumers.
Both the primal and the dual are assembled explicitly and solved with
HiGHS (through :func:`scipy.optimize.linprog`).

Optimal solutions of this LP are frequently non-unique, in the primal
(equal-cost redispatch) as well as in the dual (prices of idle agents,
ranges of the nodal price level). Every solve therefore returns one
canonical optimum:

* primal: maximum welfare, then minimum total emissions, then minimum
  generation cost; the allocation is the greedy Monge fill of the final
  dispatch;
* dual: among all multipliers complementary to that primal point, the one
  with the highest consumer prices, then the lowest generator prices. The
  carbon adjustments of idle agents are set to the tightest value their dual
  constraints allow, and the gauge is fixed so that the largest generator
  adjustment is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, csr_matrix, vstack

from .allocation import AllocationMatrix, allocate_greedy, emissions_of
from .errors import DimensionMismatch, Infeasible, IterationLimit, SolverError
from .model import SystemCase

CARBON, STANDARD, TAX = "carbon", "standard", "tax"


@dataclass(frozen=True)
class SolveOptions:
    kkt_tolerance: float = 1e-6
    max_iterations: int | None = None
    tie_break: bool = True  # lexicographic primal/dual selection among optima
    verify: bool = True  # audit KKT residuals before returning

    def __post_init__(self) -> None:
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ClearingSolution:
    p_g: np.ndarray
    p_d: np.ndarray
    theta: np.ndarray
    pi: AllocationMatrix
    e_d: np.ndarray
    flows: np.ndarray
    objective: float
    utility_total: float
    carbon_cost_total: float
    gen_cost_total: float
    model: str = CARBON
    tax: float = 0.0

    @property
    def total_emissions(self) -> float:
        return float(self.e_d.sum())

    @property
    def total_load(self) -> float:
        return float(self.p_d.sum())

    @property
    def average_emissions(self) -> float:
        load = self.total_load
        return self.total_emissions / load if load > 0 else 0.0


@dataclass(frozen=True)
class DualSolution:
    lambda_p: np.ndarray  # per bus
    lambda_g: np.ndarray  # per generator
    lambda_d: np.ndarray  # per consumer
    lambda_e: np.ndarray  # per consumer
    eta_line_up: np.ndarray  # per line, zero on unconstrained lines
    eta_line_dn: np.ndarray
    eta_g_up: np.ndarray
    eta_g_dn: np.ndarray
    eta_d_up: np.ndarray
    eta_d_dn: np.ndarray

    def shifted(self, d_lambda: float) -> "DualSolution":
        """The gauge-equivalent multipliers (lambda_P + d, lambda_G - d, lambda_D + d)."""
        return replace(
            self,
            lambda_p=self.lambda_p + d_lambda,
            lambda_g=self.lambda_g - d_lambda,
            lambda_d=self.lambda_d + d_lambda,
        )


def effective_case(case: SystemCase, model: str = CARBON, tax: float = 0.0) -> SystemCase:
    """The carbon-model case whose optimality conditions a solution of ``model`` satisfies.

    A carbon-agnostic solve is the carbon model with all consumer carbon
    costs at zero; a carbon-tax solve additionally folds ``tax * e_G`` into
    generation costs.
    """
    if model == CARBON:
        return case
    zeroed = case.with_carbon_costs([0.0] * case.n_load)
    if model == STANDARD:
        return zeroed
    if model == TAX:
        gens = tuple(replace(g, cost=g.cost + tax * g.emission) for g in case.generators)
        return replace(zeroed, generators=gens)
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# LP assembly
# ---------------------------------------------------------------------------


class _Layout:
    """Column offsets of the primal LP."""

    def __init__(self, case: SystemCase, with_allocation: bool):
        g, d, n = case.n_gen, case.n_load, case.n_bus
        self.g, self.d, self.n = g, d, n
        self.pg = 0
        self.pd = g
        self.th = g + d
        self.pi = g + d + n
        n_pi = g * d if with_allocation else 0
        self.e = self.pi + n_pi
        self.size = self.e + (d if with_allocation else 0)
        self.with_allocation = with_allocation


def _laplacian(case: SystemCase) -> np.ndarray:
    return case.incidence @ case.flow_matrix


class _Triplets:
    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        rows, cols = np.atleast_1d(rows), np.atleast_1d(cols)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape)
        self.rows.append(rows)
        self.cols.append(cols)
        self.vals.append(vals)

    def matrix(self, shape) -> csr_matrix:
        if not self.rows:
            return csr_matrix(shape)
        return coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape
        ).tocsr()


def _add_dense_block(t: _Triplets, row0: int, col0: int, block: np.ndarray) -> None:
    r, c = np.nonzero(block)
    if r.size:
        t.add(r + row0, c + col0, block[r, c])


def _primal_lp(case: SystemCase, gen_cost: np.ndarray, carbon: np.ndarray, lay: _Layout):
    g, d, n = lay.g, lay.d, lay.n
    gidx, didx = np.arange(g), np.arange(d)

    cost = np.zeros(lay.size)
    cost[lay.pg : lay.pg + g] = gen_cost
    cost[lay.pd : lay.pd + d] = -case.utility
    if lay.with_allocation:
        cost[lay.e : lay.e + d] = carbon

    eq = _Triplets()
    eq.add(case.gen_bus, lay.pg + gidx, 1.0)
    eq.add(case.load_bus, lay.pd + didx, -1.0)
    _add_dense_block(eq, 0, lay.th, -_laplacian(case))
    n_eq = n
    if lay.with_allocation:
        pi_cols = lay.pi + np.arange(g * d)
        pi_g, pi_d = np.divmod(np.arange(g * d), d)
        row_g, row_d, row_e = n, n + g, n + g + d
        eq.add(row_g + gidx, lay.pg + gidx, 1.0)
        eq.add(row_g + pi_g, pi_cols, -1.0)
        eq.add(row_d + didx, lay.pd + didx, 1.0)
        eq.add(row_d + pi_d, pi_cols, -1.0)
        eq.add(row_e + didx, lay.e + didx, 1.0)
        eq.add(row_e + pi_d, pi_cols, -case.emission[pi_g])
        n_eq = n + g + 2 * d
    a_eq = eq.matrix((n_eq, lay.size))
    b_eq = np.zeros(n_eq)

    lim = case.limited_lines
    a_ub = b_ub = None
    if lim.size:
        fm = case.flow_matrix[lim]
        ub = _Triplets()
        _add_dense_block(ub, 0, lay.th, fm)
        _add_dense_block(ub, lim.size, lay.th, -fm)
        a_ub = ub.matrix((2 * lim.size, lay.size))
        b_ub = np.concatenate([case.line_limit[lim]] * 2)

    bounds = np.empty((lay.size, 2))
    bounds[:, 0], bounds[:, 1] = -np.inf, np.inf
    bounds[lay.pg : lay.pg + g] = np.column_stack([case.gen_min, case.gen_max])
    bounds[lay.pd : lay.pd + d] = np.column_stack([case.load_min, case.load_max])
    bounds[lay.th + case.reference_index] = 0.0
    if lay.with_allocation:
        bounds[lay.pi : lay.e, 0] = 0.0
    return cost, a_ub, b_ub, a_eq, b_eq, bounds


def _linprog(cost, a_ub, b_ub, a_eq, b_eq, bounds, opts: SolveOptions, what: str):
    options = {"presolve": True, "primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    if opts.max_iterations is not None:
        options["maxiter"] = int(opts.max_iterations)
    bnds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in bounds]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bnds, method="highs", options=options)
    if res.status == 0:
        return res
    if res.status == 1:
        raise IterationLimit(f"{what}: iteration limit reached ({res.message})")
    if res.status == 2:
        raise Infeasible(f"{what}: no feasible point ({res.message})")
    if res.status == 3:
        raise SolverError(f"{what}: reported unbounded, which boxed variables rule out ({res.message})")
    raise SolverError(f"{what}: {res.message}")


def _power_scale(case: SystemCase) -> float:
    vals = [1.0, *case.gen_max, *case.load_max]
    vals += [x for x in case.line_limit if np.isfinite(x)]
    return float(max(abs(v) for v in vals))


def _solve_primal(case, gen_cost, carbon, lay, opts) -> np.ndarray:
    cost, a_ub, b_ub, a_eq, b_eq, bounds = _primal_lp(case, gen_cost, carbon, lay)
    res = _linprog(cost, a_ub, b_ub, a_eq, b_eq, bounds, opts, "market clearing")
    if not opts.tie_break:
        return res.x

    # Restrict to the optimal face: anything with a non-zero reduced cost or
    # multiplier stays where the first solve put it.
    face = bounds.copy()
    red_lo = np.asarray(res.lower.marginals)
    red_hi = np.asarray(res.upper.marginals)
    at_lo = np.abs(red_lo) > 1e-9 * (1.0 + np.abs(cost))
    at_hi = np.abs(red_hi) > 1e-9 * (1.0 + np.abs(cost))
    face[at_lo, 1] = face[at_lo, 0]
    face[at_hi, 0] = face[at_hi, 1]
    face_a_eq, face_b_eq, face_a_ub, face_b_ub = a_eq, b_eq, a_ub, b_ub
    if a_ub is not None:
        binding = np.abs(np.asarray(res.ineqlin.marginals)) > 1e-9
        if binding.any():
            face_a_eq = vstack([a_eq, a_ub[binding]]).tocsr()
            face_b_eq = np.concatenate([b_eq, b_ub[binding]])
            face_a_ub, face_b_ub = a_ub[~binding], b_ub[~binding]
            if face_a_ub.shape[0] == 0:
                face_a_ub = face_b_ub = None

    welfare = float(cost @ res.x)
    slack = 1e-9 * (1.0 + abs(welfare))
    emis = np.zeros(lay.size)
    emis[lay.pg : lay.pg + lay.g] = case.emission
    gcost = np.zeros(lay.size)
    gcost[lay.pg : lay.pg + lay.g] = case.gen_cost
    stages = [emis, gcost]

    x = res.x
    extra_rows: list[np.ndarray] = [cost]
    extra_rhs: list[float] = [welfare + slack]
    for objective in stages:
        ub_rows = np.vstack(extra_rows)
        a2 = csr_matrix(ub_rows) if face_a_ub is None else vstack([face_a_ub, csr_matrix(ub_rows)]).tocsr()
        b2 = np.array(extra_rhs) if face_b_ub is None else np.concatenate([face_b_ub, extra_rhs])
        try:
            stage = _linprog(objective, a2, b2, face_a_eq, face_b_eq, face, opts, "tie-break")
        except SolverError:
            break
        x = stage.x
        value = float(objective @ x)
        extra_rows.append(objective)
        extra_rhs.append(value + 1e-9 * (1.0 + abs(value)))
    return x


def _primal_solution(case, x, lay, gen_cost, carbon, model, tax) -> ClearingSolution:
    g, d, n = lay.g, lay.d, lay.n
    p_g = np.clip(x[lay.pg : lay.pg + g], case.gen_min, case.gen_max)
    p_d = np.clip(x[lay.pd : lay.pd + d], case.load_min, case.load_max)
    theta = x[lay.th : lay.th + n].copy()
    theta[case.reference_index] = 0.0
    pi = allocate_greedy(p_g, p_d, case.emission, carbon)
    e_d = emissions_of(pi, case.emission)
    utility = float(case.utility @ p_d)
    gen_total = float(case.gen_cost @ p_g)
    if model == TAX:
        carbon_total = float(tax * (case.emission @ p_g))
    else:
        carbon_total = float(carbon @ e_d)
    return ClearingSolution(
        p_g=p_g,
        p_d=p_d,
        theta=theta,
        pi=pi,
        e_d=e_d,
        flows=case.flow_matrix @ theta,
        objective=utility - carbon_total - gen_total,
        utility_total=utility,
        carbon_cost_total=carbon_total,
        gen_cost_total=gen_total,
        model=model,
        tax=float(tax),
    )


class _DualLayout:
    def __init__(self, case: SystemCase, with_allocation: bool):
        n, g, d, lc = case.n_bus, case.n_gen, case.n_load, case.limited_lines.size
        offsets = {}
        pos = 0
        for name, size in (
            ("lp", n),
            ("lg", g if with_allocation else 0),
            ("ld", d if with_allocation else 0),
            ("le", d if with_allocation else 0),
            ("egu", g),
            ("egd", g),
            ("edu", d),
            ("edd", d),
            ("elu", lc),
            ("eld", lc),
            ("mu", 1),
        ):
            offsets[name] = (pos, pos + size)
            pos += size
        self.slices = {k: slice(*v) for k, v in offsets.items()}
        self.start = {k: v[0] for k, v in offsets.items()}
        self.size = pos
        self.with_allocation = with_allocation


def _dual_lp(case: SystemCase, gen_cost: np.ndarray, carbon: np.ndarray, lay: _DualLayout):
    n, g, d = case.n_bus, case.n_gen, case.n_load
    lim = case.limited_lines
    s = lay.start
    gidx, didx = np.arange(g), np.arange(d)

    eq = _Triplets()
    rhs = []
    # generator output stationarity
    eq.add(gidx, s["lp"] + case.gen_bus, 1.0)
    if lay.with_allocation:
        eq.add(gidx, s["lg"] + gidx, 1.0)
    eq.add(gidx, s["egu"] + gidx, -1.0)
    eq.add(gidx, s["egd"] + gidx, 1.0)
    rhs.append(gen_cost)
    # consumption stationarity
    r0 = g
    eq.add(r0 + didx, s["lp"] + case.load_bus, -1.0)
    if lay.with_allocation:
        eq.add(r0 + didx, s["ld"] + didx, 1.0)
    eq.add(r0 + didx, s["edu"] + didx, -1.0)
    eq.add(r0 + didx, s["edd"] + didx, 1.0)
    rhs.append(-case.utility)
    # angle stationarity (the reference row carries the multiplier of theta_ref = 0)
    r0 = g + d
    _add_dense_block(eq, r0, s["lp"], -_laplacian(case))
    if lim.size:
        weighted = case.incidence[:, lim] * case.susceptance[lim]
        _add_dense_block(eq, r0, s["eld"], weighted)
        _add_dense_block(eq, r0, s["elu"], -weighted)
    eq.add(r0 + case.reference_index, s["mu"], 1.0)
    rhs.append(np.zeros(n))
    n_eq = g + d + n
    if lay.with_allocation:
        eq.add(n_eq + didx, s["le"] + didx, 1.0)
        rhs.append(carbon)
        n_eq += d
    a_eq = eq.matrix((n_eq, lay.size))
    b_eq = np.concatenate(rhs)

    a_pi = None
    if lay.with_allocation and g and d:
        pg_, pd_ = np.divmod(np.arange(g * d), d)
        rows = np.arange(g * d)
        t = _Triplets()
        t.add(rows, s["lg"] + pg_, -1.0)
        t.add(rows, s["ld"] + pd_, -1.0)
        t.add(rows, s["le"] + pd_, -case.emission[pg_])
        a_pi = t.matrix((g * d, lay.size))

    cost = np.zeros(lay.size)
    cost[lay.slices["egu"]] = case.gen_max
    cost[lay.slices["egd"]] = -case.gen_min
    cost[lay.slices["edu"]] = case.load_max
    cost[lay.slices["edd"]] = -case.load_min
    cost[lay.slices["elu"]] = case.line_limit[lim]
    cost[lay.slices["eld"]] = case.line_limit[lim]

    bounds = np.empty((lay.size, 2))
    bounds[:, 0], bounds[:, 1] = -np.inf, np.inf
    for name in ("egu", "egd", "edu", "edd", "elu", "eld"):
        bounds[lay.slices[name], 0] = 0.0
    return cost, a_pi, a_eq, b_eq, bounds


def _dual_face(case, sol: ClearingSolution, gen_cost, carbon, lay: _DualLayout, tol: float):
    """Dual LP restricted to multipliers complementary with ``sol`` (the optimal dual face)."""
    cost, a_pi, a_eq, b_eq, bounds = _dual_lp(case, gen_cost, carbon, lay)
    sl = lay.slices

    def pin_zero(name, mask):
        idx = np.arange(sl[name].start, sl[name].stop)[mask]
        bounds[idx] = 0.0

    pin_zero("egu", case.gen_max - sol.p_g > tol)
    pin_zero("egd", sol.p_g - case.gen_min > tol)
    pin_zero("edu", case.load_max - sol.p_d > tol)
    pin_zero("edd", sol.p_d - case.load_min > tol)
    lim = case.limited_lines
    if lim.size:
        flows = sol.flows[lim]
        pin_zero("elu", case.line_limit[lim] - flows > tol)
        pin_zero("eld", case.line_limit[lim] + flows > tol)
    if lay.with_allocation and case.n_gen:
        # fix the gauge; the standard model has none
        bounds[sl["lp"].start + case.reference_index] = 0.0

    a_ub = b_ub = None
    if a_pi is not None:
        served = sol.pi.pi.reshape(-1) > tol
        if served.any():
            a_eq = vstack([a_eq, a_pi[served]]).tocsr()
            b_eq = np.concatenate([b_eq, np.zeros(int(served.sum()))])
        if (~served).any():
            a_ub = a_pi[~served]
            b_ub = np.zeros(a_ub.shape[0])
    return cost, a_ub, b_ub, a_eq, b_eq, bounds


def _price_objectives(case: SystemCase, lay: _DualLayout) -> tuple[np.ndarray, np.ndarray]:
    s = lay.start
    load_side = np.zeros(lay.size)  # minimise -(sum of consumer prices)
    np.add.at(load_side, s["lp"] + case.load_bus, -1.0)
    gen_side = np.zeros(lay.size)  # minimise sum of generator prices
    np.add.at(gen_side, s["lp"] + case.gen_bus, 1.0)
    if lay.with_allocation:
        load_side[lay.slices["ld"]] += 1.0
        gen_side[lay.slices["lg"]] += 1.0
    return load_side, gen_side


def _solve_dual(case, sol, gen_cost, carbon, with_allocation, opts) -> np.ndarray:
    lay = _DualLayout(case, with_allocation)
    scale = _power_scale(case)
    last_error: SolverError | None = None
    for tol in (1e-9 * scale, 1e-7 * scale, 1e-5 * scale):
        cost, a_ub, b_ub, a_eq, b_eq, bounds = _dual_face(case, sol, gen_cost, carbon, lay, tol)
        load_side, gen_side = _price_objectives(case, lay)
        objectives = [load_side, gen_side] if opts.tie_break else [np.zeros(lay.size)]
        rows: list[np.ndarray] = []
        rhs: list[float] = []
        y = None
        try:
            for k, obj in enumerate(objectives):
                a2, b2 = a_ub, b_ub
                if rows:
                    extra = csr_matrix(np.vstack(rows))
                    a2 = extra if a_ub is None else vstack([a_ub, extra]).tocsr()
                    b2 = np.array(rhs) if b_ub is None else np.concatenate([b_ub, rhs])
                try:
                    res = _linprog(obj, a2, b2, a_eq, b_eq, bounds, opts, "dual selection")
                except SolverError as exc:
                    if "unbounded" in str(exc) and k == 0:
                        res = _linprog(np.zeros(lay.size), a2, b2, a_eq, b_eq, bounds, opts, "dual face")
                        y = res.x
                        break
                    if y is not None:
                        break
                    raise
                y = res.x
                value = float(obj @ y)
                rows.append(obj)
                rhs.append(value + 1e-9 * (1.0 + abs(value)))
            return y, lay
        except SolverError as exc:
            last_error = exc
    raise SolverError(f"could not recover multipliers complementary to the primal optimum: {last_error}")


def _unpack_dual(case, y, lay: _DualLayout, carbon) -> DualSolution:
    sl = lay.slices
    g, d = case.n_gen, case.n_load
    lines = len(case.lines)
    lim = case.limited_lines
    up, dn = np.zeros(lines), np.zeros(lines)
    up[lim], dn[lim] = y[sl["elu"]], y[sl["eld"]]
    if lay.with_allocation:
        lam_g, lam_d, lam_e = y[sl["lg"]].copy(), y[sl["ld"]].copy(), y[sl["le"]].copy()
    else:
        lam_g, lam_d, lam_e = np.zeros(g), np.zeros(d), np.asarray(carbon, dtype=float).copy()
    return DualSolution(
        lambda_p=y[sl["lp"]].copy(),
        lambda_g=lam_g,
        lambda_d=lam_d,
        lambda_e=lam_e,
        eta_line_up=up,
        eta_line_dn=dn,
        eta_g_up=y[sl["egu"]].copy(),
        eta_g_dn=y[sl["egd"]].copy(),
        eta_d_up=y[sl["edu"]].copy(),
        eta_d_dn=y[sl["edd"]].copy(),
    )


def canonicalize_idle(case: SystemCase, sol: ClearingSolution, duals: DualSolution, tol: float = 1e-9) -> DualSolution:
    """Give agents with zero output the tightest carbon adjustment their dual constraints allow.

    The multipliers of an idle generator (consumer) are only bounded by the
    pairwise allocation constraints and its own bid, so any value in an
    interval is optimal. Taking the lower end of that interval, generators
    first and then consumers, keeps every optimality condition and makes the
    adjustments ordered by emission factor and carbon cost for idle agents
    too. Box multipliers of the touched agents are recomputed.
    """
    if case.n_gen == 0 or case.n_load == 0:
        return duals
    eff = effective_case(case, sol.model, sol.tax)
    e, c = eff.emission, eff.carbon_cost
    lam_p, lam_g, lam_d = duals.lambda_p, duals.lambda_g.copy(), duals.lambda_d.copy()
    eta_gu, eta_gd = duals.eta_g_up.copy(), duals.eta_g_dn.copy()
    eta_du, eta_dd = duals.eta_d_up.copy(), duals.eta_d_dn.copy()

    idle_g = np.flatnonzero(sol.p_g <= tol)
    idle_d = np.flatnonzero(sol.p_d <= tol)
    for k in idle_g:
        lam_g[k] = min(lam_g[k], float(np.max(-lam_d - c * e[k])))
    for j in idle_d:
        lam_d[j] = min(lam_d[j], float(np.max(-lam_g - c[j] * e)))

    def split(r):
        return max(r, 0.0), max(-r, 0.0)

    for k in idle_g:
        r = lam_p[eff.gen_bus[k]] + lam_g[k] - eff.gen_cost[k]
        if eff.gen_max[k] - sol.p_g[k] > tol:
            eta_gu[k], eta_gd[k] = 0.0, max(-r, 0.0)
        else:
            eta_gu[k], eta_gd[k] = split(r)
    for j in idle_d:
        r = eff.utility[j] - lam_p[eff.load_bus[j]] + lam_d[j]
        if eff.load_max[j] - sol.p_d[j] > tol:
            eta_du[j], eta_dd[j] = 0.0, max(-r, 0.0)
        else:
            eta_du[j], eta_dd[j] = split(r)
    return replace(duals, lambda_g=lam_g, lambda_d=lam_d, eta_g_up=eta_gu, eta_g_dn=eta_gd, eta_d_up=eta_du, eta_d_dn=eta_dd)


def _solve(case: SystemCase, model: str, tax: float, opts: SolveOptions | None):
    opts = opts or SolveOptions()
    with_allocation = model == CARBON
    gen_cost = case.gen_cost + (tax * case.emission if model == TAX else 0.0)
    carbon = case.carbon_cost if model == CARBON else np.zeros(case.n_load)
    lay = _Layout(case, with_allocation)
    x = _solve_primal(case, gen_cost, carbon, lay, opts)
    sol = _primal_solution(case, x, lay, gen_cost, carbon, model, tax)

    y, dlay = _solve_dual(case, sol, gen_cost, carbon, with_allocation, opts)
    duals = _unpack_dual(case, y, dlay, carbon)
    duals = canonicalize_idle(case, sol, duals, tol=1e-9 * _power_scale(case))
    if case.n_gen:
        from .pricing import normalize_gauge

        duals = normalize_gauge(duals)

    if opts.verify:
        from .equilibrium import kkt_residuals

        report = kkt_residuals(case, sol, duals, tol=opts.kkt_tolerance)
        if not report.passed:
            raise SolverError(
                f"solution for {case.name!r} fails the KKT audit: max residual {report.max_residual:.3e} "
                f"({report.worst})"
            )
    return sol, duals


def solve_clearing(case: SystemCase, opts: SolveOptions | None = None) -> tuple[ClearingSolution, DualSolution]:
    """Carbon-aware clearing with the allocation mechanism; returns a canonical primal-dual pair."""
    return _solve(case, CARBON, 0.0, opts)


def solve_standard(case: SystemCase, opts: SolveOptions | None = None) -> tuple[ClearingSolution, DualSolution]:
    """Carbon-agnostic DC-OPF: carbon costs ignored, no allocation constraints."""
    return _solve(case, STANDARD, 0.0, opts)


def solve_with_tax(case: SystemCase, tax: float, opts: SolveOptions | None = None) -> tuple[ClearingSolution, DualSolution]:
    """Carbon-agnostic clearing with generation costs raised by ``tax * e_G``."""
    if not tax >= 0:
        raise ValueError(f"tax must be non-negative, got {tax}")
    return _solve(case, TAX, float(tax), opts)


def objective_breakdown(sol: ClearingSolution, case: SystemCase) -> tuple[float, float, float]:
    """(utility, carbon cost, generation cost) recomputed from the primal values."""
    if sol.p_g.size != case.n_gen or sol.p_d.size != case.n_load or sol.e_d.size != case.n_load:
        raise DimensionMismatch("solution does not match the case dimensions")
    utility = float(case.utility @ sol.p_d)
    if sol.model == TAX:
        carbon = float(sol.tax * (case.emission @ sol.p_g))
    elif sol.model == STANDARD:
        carbon = 0.0
    else:
        carbon = float(case.carbon_cost @ sol.e_d)
    return utility, carbon, float(case.gen_cost @ sol.p_g)


def dual_objective(case: SystemCase, duals: DualSolution) -> float:
    """Value of the dual objective: bound multipliers times their bounds."""
    lim = case.limited_lines
    return float(
        duals.eta_g_up @ case.gen_max
        - duals.eta_g_dn @ case.gen_min
        + duals.eta_d_up @ case.load_max
        - duals.eta_d_dn @ case.load_min
        + (duals.eta_line_up[lim] + duals.eta_line_dn[lim]) @ case.line_limit[lim]
    )
