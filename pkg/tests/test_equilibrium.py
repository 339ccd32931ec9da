from dataclasses import replace

import numpy as np
import pytest

from carbon_clear import (
    AllocationMatrix,
    Bus,
    Consumer,
    DimensionMismatch,
    Generator,
    Line,
    MarginalMismatch,
    SystemCase,
    best_response_consumer,
    best_response_generator,
    carbon_manager_check,
    fixture_t1,
    gen_prices,
    kkt_residuals,
    load_prices,
    price_setter_residual,
    random_case,
    solve_clearing,
    transmission_owner_check,
    verify_equilibrium,
)

from conftest import dc_theta


def with_dispatch(case, sol, p_g, p_d, pi):
    p_g, p_d, pi = (np.asarray(x, float) for x in (p_g, p_d, pi))
    theta = dc_theta(case, p_g, p_d)
    e_d = case.emission @ pi
    util, carbon, gen = case.utility @ p_d, case.carbon_cost @ e_d, case.gen_cost @ p_g
    return replace(
        sol,
        p_g=p_g,
        p_d=p_d,
        theta=theta,
        flows=case.flow_matrix @ theta,
        pi=AllocationMatrix(pi, pi.sum(axis=1), pi.sum(axis=0)),
        e_d=e_d,
        objective=util - carbon - gen,
        utility_total=util,
        carbon_cost_total=carbon,
        gen_cost_total=gen,
    )


def test_centralized_solution_is_an_equilibrium():
    case = fixture_t1((0, 15, 20))
    sol, duals = solve_clearing(case)
    rep = verify_equilibrium(case, sol, duals)
    assert rep.passed
    assert rep.objective == pytest.approx(235)
    assert rep.best_responses.max_gap <= 1e-9


def test_alternate_optimum_with_consumer_3_served():
    # d3 takes 2.4 MW of g2 at a price equal to its utility; g1 covers d2's shortfall
    case = fixture_t1((0, 15, 20))
    sol, duals = solve_clearing(case)
    pi = [[0, 7.4, 0], [0, 7.6, 2.4], [15, 0, 0]]
    alt = with_dispatch(case, sol, [7.4, 10, 15], [15, 15, 2.4], pi)
    assert alt.objective == pytest.approx(235)
    assert (alt.utility_total, alt.carbon_cost_total, alt.gen_cost_total) == pytest.approx((583.2, 99, 249.2))
    rep = verify_equilibrium(case, alt, duals)
    assert rep.passed, rep.residuals.failures()
    assert all(abs(r.gap) <= 1e-9 for r in rep.best_responses.generators + rep.best_responses.consumers)
    np.testing.assert_allclose(load_prices(duals, case), [6, 17, 18], atol=1e-6)


def test_kkt_flags_constructed_violations(t1):
    sol, duals = solve_clearing(t1)
    bumped = replace(sol, p_g=sol.p_g + np.array([1.0, 0, 0]))
    rep = kkt_residuals(t1, bumped, duals)
    assert not rep.passed
    assert rep.primal["balance"][0] == pytest.approx(-1.0)
    np.testing.assert_allclose(rep.primal["balance"][1:], 0, atol=1e-9)
    bad = replace(duals, eta_g_up=np.array([-1.0, 0, 0]))
    rep = kkt_residuals(t1, sol, bad)
    assert rep.dual["eta_nonneg"].max() == pytest.approx(1.0)
    assert not rep.passed
    with pytest.raises(DimensionMismatch):
        kkt_residuals(t1, replace(sol, p_g=np.zeros(2)), duals)


def test_generator_best_responses_on_uniform_row():
    case = fixture_t1((15, 15, 15))
    sol, duals = solve_clearing(case)
    gp = gen_prices(duals, case)
    g2 = best_response_generator(case.generators[1], gp[1], sol.p_g[1])
    assert g2.interval == (10.0, 10.0) and g2.gap == pytest.approx(0)
    g3 = best_response_generator(case.generators[2], gp[2], sol.p_g[2])
    assert g3.interval == (0.0, 0.0) and g3.gap == pytest.approx(0)
    flat = best_response_generator(Generator("x", "1", 5.0, 0, 2, 9), 5.0, 4.0)
    assert flat.interval == (2, 9) and flat.gap == 0


def test_consumer_best_responses():
    case = fixture_t1((15, 15, 15))
    for load in (15, 10, 5):
        r = best_response_consumer(case.consumers[0], 18.0, load, tol=1e-9)
        assert r.interval == (0, 15) and r.gap == 0
    d1 = best_response_consumer(fixture_t1((0, 15, 5)).consumers[0], 6.0, 15.0)
    assert d1.interval == (15, 15) and d1.gap == 0
    dear = best_response_consumer(case.consumers[0], 25.0, 15.0)
    assert dear.interval == (0, 0) and dear.gap == pytest.approx(7 * 15)
    assert best_response_consumer(case.consumers[0], 25.0).candidate_value is None


def two_bus(limit):
    return SystemCase(
        "two",
        [Bus("a", True), Bus("b")],
        [Line("a", "b", 10.0, limit=limit)],
        [Generator("cheap", "a", 10.0, 0.5, 0, 50), Generator("dear", "b", 30.0, 0.5, 0, 50)],
        [Consumer("d", "b", 100.0, 0, 20, 20)],
    )


def test_transmission_owner_on_congested_line():
    case = two_bus(5.0)
    sol, duals = solve_clearing(case)
    chk = transmission_owner_check(sol.theta, duals.lambda_p, case)
    assert chk.gap == pytest.approx(0, abs=1e-9)
    assert chk.candidate_value == pytest.approx(20 * 5)
    # same prices, interior flow: the owner would rather fill the line
    interior = transmission_owner_check(sol.theta * 0.5, duals.lambda_p, case)
    assert interior.gap == pytest.approx(50)


def test_transmission_owner_uniform_prices(t1):
    sol, duals = solve_clearing(t1)
    chk = transmission_owner_check(sol.theta, duals.lambda_p, t1)
    assert chk.gap == 0 and chk.optimal_value == 0
    unlimited_spread = transmission_owner_check(sol.theta, np.array([0.0, 1.0, 0.0]), t1)
    assert unlimited_spread.optimal_value == np.inf
    with pytest.raises(DimensionMismatch):
        transmission_owner_check(sol.theta[:2], duals.lambda_p, t1)


def test_transmission_owner_meshed_network():
    # a congested triangle: loop flows leave price spreads on lines below their limit
    case = SystemCase(
        "tri",
        [Bus("a", True), Bus("b"), Bus("c")],
        [Line("a", "b", 1.0, limit=20.0), Line("a", "c", 1.0), Line("b", "c", 1.0)],
        [Generator("ga", "a", 10.0, 0.0, 0, 100), Generator("gc", "c", 40.0, 0.0, 0, 100)],
        [Consumer("db", "b", 100.0, 0, 40, 40)],
    )
    sol, duals = solve_clearing(case)
    spread = duals.lambda_p[case.line_to] - duals.lambda_p[case.line_from]
    interior = np.abs(np.abs(sol.flows) - np.where(np.isfinite(case.line_limit), case.line_limit, np.inf)) > 1e-6
    assert np.any(interior & (np.abs(spread) > 1e-6))  # the per-line test would misfire here
    assert transmission_owner_check(sol.theta, duals.lambda_p, case).gap == pytest.approx(0, abs=1e-7)
    assert verify_equilibrium(case, sol, duals).passed


def test_price_setter_residual():
    case = fixture_t1((15, 15, 15))
    sol, _ = solve_clearing(case)
    np.testing.assert_allclose(price_setter_residual(case, sol), 0, atol=1e-9)
    assert sol.p_g.sum() == pytest.approx(30) and sol.p_d.sum() == pytest.approx(30)
    dropped = replace(sol, p_g=sol.p_g * np.array([0, 1, 1]))
    assert price_setter_residual(case, dropped)[0] == pytest.approx(sol.p_g[0])


def test_carbon_manager_check():
    case = fixture_t1((0, 15, 5))
    sol, duals = solve_clearing(case)
    chk = carbon_manager_check(sol, duals, case)
    assert chk.allocation_cost == pytest.approx(120) and chk.gap == pytest.approx(0)
    assert chk.max_tight_violation <= 1e-9 and chk.max_pair_violation <= 1e-9
    # d2 (c=15) swaps 5 MW of g1's output for 5 MW of g3's coal held by d1 (c=0)
    pi = sol.pi.pi.copy()
    assert pi[0, 1] >= 5 - 1e-6 and pi[2, 0] >= 5 - 1e-6
    pi[0, 1] -= 5
    pi[2, 1] += 5
    pi[2, 0] -= 5
    pi[0, 0] += 5
    worse = replace(sol, pi=AllocationMatrix(pi, pi.sum(1), pi.sum(0)))
    bad = carbon_manager_check(worse, duals, case)
    assert bad.gap == pytest.approx(5 * 15 * (1.0 - 0.6))
    assert bad.max_tight_violation > 0  # both views agree
    with pytest.raises(MarginalMismatch):
        carbon_manager_check(replace(sol, p_g=sol.p_g + 1), duals, case)


def test_uniform_carbon_cost_any_allocation_is_optimal():
    case = fixture_t1((15, 15, 15))
    sol, duals = solve_clearing(case)
    np.testing.assert_allclose(sol.p_g, [20, 10, 0], atol=1e-9)
    np.testing.assert_allclose(sol.p_d, [15, 15, 0], atol=1e-9)
    pi = np.array([[10.0, 10, 0], [5, 5, 0], [0, 0, 0]])
    other = replace(sol, pi=AllocationMatrix(pi, pi.sum(1), pi.sum(0)))
    assert carbon_manager_check(other, duals, case).gap == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_random_solutions_verify(seed):
    case = random_case(12, 16, 10, seed=seed)
    sol, duals = solve_clearing(case)
    rep = verify_equilibrium(case, sol, duals)
    assert rep.passed
    assert rep.best_responses.min_gap >= -1e-6 * rep.best_responses.value_scale


@pytest.mark.parametrize("seed", range(5))
def test_best_responses_never_beat_the_dispatch(seed):
    # any point of an agent's optimal interval earns what the candidate earns
    case = random_case(8, 10, 6, seed=seed)
    sol, duals = solve_clearing(case)
    gp, lp = gen_prices(duals, case), load_prices(duals, case)
    for k, g in enumerate(case.generators):
        r = best_response_generator(g, gp[k], sol.p_g[k], tol=1e-7)
        for p in r.interval:
            assert r.margin * p <= r.candidate_value + 1e-5
    for k, d in enumerate(case.consumers):
        r = best_response_consumer(d, lp[k], sol.p_d[k], tol=1e-7)
        for p in r.interval:
            assert r.margin * p <= r.candidate_value + 1e-5
