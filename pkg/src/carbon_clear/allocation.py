"""Carbon-manager subproblem: assign generated power (and its emissions) to consumers.

Given a dispatch, the carbon manager solves a transportation problem with
cost ``c_d * e_g`` per MW moved from generator ``g`` to consumer ``d``.
That cost matrix is Monge once consumers are sorted by falling carbon cost
and generators by rising emission factor, so northwest-corner filling in
that order is optimal. :func:`allocate_greedy` implements the fill in exact
rational arithmetic; :func:`allocate_lp` solves the same problem as an LP and
serves as its independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import DimensionMismatch, MarginalMismatch, SolverError

MARGINAL_RTOL = 1e-6


@dataclass(frozen=True)
class AllocationMatrix:
    pi: np.ndarray  # (generators x consumers) MW
    row_marginals: np.ndarray  # per generator, equals P_G
    col_marginals: np.ndarray  # per consumer, equals P_D

    @property
    def shape(self) -> tuple[int, int]:
        return self.pi.shape


@dataclass(frozen=True)
class AllocationDuals:
    lambda_g: np.ndarray
    lambda_d: np.ndarray
    lambda_e: np.ndarray


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if np.any(~np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_inputs(p_g, p_d, e_g, c_d):
    p_g, p_d = _as_vector(p_g, "p_g"), _as_vector(p_d, "p_d")
    e_g, c_d = _as_vector(e_g, "e_g"), _as_vector(c_d, "c_d")
    if p_g.shape != e_g.shape:
        raise DimensionMismatch(f"{p_g.size} generator outputs but {e_g.size} emission factors")
    if p_d.shape != c_d.shape:
        raise DimensionMismatch(f"{p_d.size} consumer loads but {c_d.size} carbon costs")
    if np.any(p_g < -MARGINAL_RTOL) or np.any(p_d < -MARGINAL_RTOL):
        raise ValueError("allocation marginals must be non-negative")
    p_g, p_d = np.maximum(p_g, 0.0), np.maximum(p_d, 0.0)
    supply, demand = p_g.sum(), p_d.sum()
    if abs(supply - demand) > MARGINAL_RTOL * (1.0 + supply):
        raise MarginalMismatch(f"total generation {supply:.9g} != total consumption {demand:.9g}")
    return p_g, p_d, e_g, c_d


def _balanced_fractions(p_g: np.ndarray, p_d: np.ndarray) -> tuple[list[Fraction], list[Fraction]]:
    """Exact rational marginals; the side with the smaller total is rescaled up to the other."""
    rows = [Fraction(float(x)) for x in p_g]
    cols = [Fraction(float(x)) for x in p_d]
    total_r, total_c = sum(rows, Fraction(0)), sum(cols, Fraction(0))
    if total_r != total_c:
        if total_r < total_c and total_r > 0:
            rows = [x * total_c / total_r for x in rows]
        elif total_c < total_r and total_c > 0:
            cols = [x * total_r / total_c for x in cols]
        elif total_r == 0:
            cols = [Fraction(0)] * len(cols)
        else:
            rows = [Fraction(0)] * len(rows)
    return rows, cols


def greedy_order(e_g, c_d) -> tuple[np.ndarray, np.ndarray]:
    """Generator order (cleanest first) and consumer order (highest carbon cost first); stable on ties."""
    gen_order = np.argsort(np.asarray(e_g, dtype=float), kind="stable")
    load_order = np.argsort(-np.asarray(c_d, dtype=float), kind="stable")
    return gen_order, load_order


def allocate_greedy(p_g, p_d, e_g, c_d) -> AllocationMatrix:
    """Northwest-corner allocation in Monge order; optimal for the carbon manager."""
    p_g, p_d, e_g, c_d = _check_inputs(p_g, p_d, e_g, c_d)
    rows, cols = _balanced_fractions(p_g, p_d)
    gen_order, load_order = greedy_order(e_g, c_d)

    pi = np.zeros((p_g.size, p_d.size))
    supply = {int(g): rows[g] for g in gen_order}
    demand = {int(d): cols[d] for d in load_order}
    gi = di = 0
    while gi < len(gen_order) and di < len(load_order):
        g, d = int(gen_order[gi]), int(load_order[di])
        qty = min(supply[g], demand[d])
        if qty > 0:
            pi[g, d] = float(qty)
        supply[g] -= qty
        demand[d] -= qty
        if supply[g] == 0:
            gi += 1
        if demand[d] == 0:
            di += 1
    return AllocationMatrix(pi, np.array([float(x) for x in rows]), np.array([float(x) for x in cols]))


def allocate_lp(p_g, p_d, e_g, c_d) -> tuple[AllocationMatrix, AllocationDuals]:
    """Transportation LP for the same problem, returning multipliers in the market sign convention.

    The multipliers satisfy ``lambda_g + lambda_d + c_d * e_g >= 0`` for all
    pairs, with equality wherever power is allocated.
    """
    p_g, p_d, e_g, c_d = _check_inputs(p_g, p_d, e_g, c_d)
    n_g, n_d = p_g.size, p_d.size
    if n_g == 0 or n_d == 0:
        pi = np.zeros((n_g, n_d))
        duals = AllocationDuals(np.zeros(n_g), np.zeros(n_d), c_d.copy())
        return AllocationMatrix(pi, p_g, p_d), duals

    rows_f, cols_f = _balanced_fractions(p_g, p_d)
    rows = np.array([float(x) for x in rows_f])
    cols = np.array([float(x) for x in cols_f])

    cost = np.outer(e_g, c_d).reshape(-1)
    g_idx, d_idx = np.divmod(np.arange(n_g * n_d), n_d)
    data = np.ones(2 * n_g * n_d)
    r = np.concatenate([g_idx, n_g + d_idx])
    c = np.concatenate([np.arange(n_g * n_d)] * 2)
    a_eq = coo_matrix((data, (r, c)), shape=(n_g + n_d, n_g * n_d)).tocsr()
    # one balance row is redundant; HiGHS handles that, and the marginals remain a valid dual
    res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([rows, cols]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"transportation LP failed: {res.message}")
    pi = np.maximum(res.x.reshape(n_g, n_d), 0.0)
    y = np.asarray(res.eqlin.marginals)
    lam_g, lam_d = -y[:n_g], -y[n_g:]
    return AllocationMatrix(pi, rows, cols), AllocationDuals(lam_g, lam_d, c_d.copy())


def emissions_of(pi, e_g) -> np.ndarray:
    """Per-consumer emissions, E_d = sum_g e_g * pi[g, d]."""
    matrix = pi.pi if isinstance(pi, AllocationMatrix) else np.asarray(pi, dtype=float)
    e_g = _as_vector(e_g, "e_g")
    if matrix.ndim != 2 or matrix.shape[0] != e_g.size:
        raise DimensionMismatch(f"allocation of shape {matrix.shape} vs {e_g.size} emission factors")
    return e_g @ matrix


def allocation_cost(pi, e_g, c_d) -> float:
    """Total carbon cost c_D . E_D of an allocation."""
    emissions = emissions_of(pi, e_g)
    c_d = _as_vector(c_d, "c_d")
    if c_d.size != emissions.size:
        raise DimensionMismatch(f"{emissions.size} consumers vs {c_d.size} carbon costs")
    return float(c_d @ emissions)
