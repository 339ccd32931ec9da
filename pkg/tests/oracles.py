"""Independent reference computations used by the tests.

The market LP is restated with cvxpy and solved by an interior-point
solver, so it shares neither the model assembly nor the solver with the
package. The remaining oracles are closed forms.
"""

import itertools

import numpy as np


def clearing_objective(case, carbon=True, tax=0.0):
    """Optimal welfare written directly from the model, solved with Clarabel."""
    import cvxpy as cp

    g, d, n = case.n_gen, case.n_load, case.n_bus
    pg, pd, th = cp.Variable(g), cp.Variable(d), cp.Variable(n)
    gen_at = np.zeros((n, g))
    gen_at[case.gen_bus, np.arange(g)] = 1.0
    load_at = np.zeros((n, d))
    load_at[case.load_bus, np.arange(d)] = 1.0
    # flow on line (i, j) is beta * (theta_i - theta_j)
    flows = []
    out = [0] * n
    for k, line in enumerate(case.lines):
        i, j = case.bus_index[line.from_bus], case.bus_index[line.to_bus]
        flows.append((k, line, line.susceptance * (th[i] - th[j])))
    cons = [pg >= case.gen_min, pg <= case.gen_max, pd >= case.load_min, pd <= case.load_max, th[case.reference_index] == 0]
    for i in range(n):
        net = 0
        for k, line, f in flows:
            if case.bus_index[line.from_bus] == i:
                net = net + f
            if case.bus_index[line.to_bus] == i:
                net = net - f
        cons.append(gen_at[i] @ pg - load_at[i] @ pd - net == 0)
    for k, line, f in flows:
        if line.limit is not None:
            cons += [f <= line.limit, f >= -line.limit]
    cost = case.gen_cost + tax * case.emission
    welfare = case.utility @ pd - cost @ pg
    if carbon:
        pi = cp.Variable((g, d), nonneg=True)
        cons += [cp.sum(pi, axis=1) == pg, cp.sum(pi, axis=0) == pd]
        welfare = welfare - cp.sum(cp.multiply(np.outer(case.emission, case.carbon_cost), pi))
    prob = cp.Problem(cp.Maximize(welfare), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == "optimal", prob.status
    return float(prob.value)


def transport_bruteforce(p_g, p_d, e_g, c_d):
    """Minimum carbon cost by enumerating every basis of the transportation problem.

    A vertex is fixed by m + n - 1 cells whose equality system has a unique
    non-negative solution; the cheapest vertex is optimal. Only for tiny
    instances (at most 3 x 3).
    """
    m, n = len(p_g), len(p_d)
    cells = list(itertools.product(range(m), range(n)))
    a = np.zeros((m + n, m * n))
    for k, (r, c) in enumerate(cells):
        a[r, k] = 1.0
        a[m + c, k] = 1.0
    b = np.concatenate([p_g, p_d])
    cost = np.array([e_g[r] * c_d[c] for r, c in cells])
    best = np.inf
    for basis in itertools.combinations(range(m * n), m + n - 1):
        cols = list(basis)
        x, *_ = np.linalg.lstsq(a[:, cols], b, rcond=None)
        if np.abs(a[:, cols] @ x - b).max() > 1e-9 or x.min() < -1e-9:
            continue
        best = min(best, float(cost[cols] @ x))
    return best


def single_node_price(costs, caps, demand):
    """Merit-order clearing price for a fixed demand: cost of the marginal unit."""
    order = np.argsort(costs, kind="stable")
    left = demand
    for k in order:
        if left <= caps[k] + 1e-12:
            return costs[k]
        left -= caps[k]
    raise ValueError("demand exceeds capacity")
