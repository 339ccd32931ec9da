import numpy as np
import pytest

from carbon_clear import (
    Bus,
    Consumer,
    Generator,
    SystemCase,
    equivalence_standard,
    equivalence_tax,
    fixture_t1,
    individual_rationality,
    random_case,
    settle,
    solve_clearing,
    solve_standard,
)


def test_settlement_uniform_row():
    case = fixture_t1((15, 15, 15))
    sol, duals = solve_clearing(case)
    rep = settle(case, sol, duals)
    assert rep.consumer_payments == pytest.approx(540)
    assert rep.generator_revenues == pytest.approx(330)
    assert rep.congestion_rent == pytest.approx(0, abs=1e-9)
    assert rep.surplus == pytest.approx(210) == 15 * 14
    assert rep.carbon_revenue == pytest.approx(210)
    assert rep.revenue_adequate and rep.budget_balanced


def test_settlement_row_0_15_5():
    case = fixture_t1((0, 15, 5))
    sol, duals = solve_clearing(case)
    rep = settle(case, sol, duals)
    assert rep.consumer_payments == pytest.approx(510)
    assert rep.generator_revenues == pytest.approx(390)
    assert rep.surplus == pytest.approx(15 * 5 + 5 * 9)
    assert rep.budget_balanced


def test_settlement_standard_row(t1):
    sol, duals = solve_standard(t1)
    rep = settle(t1, sol, duals)
    assert rep.surplus == pytest.approx(0, abs=1e-6)


def test_settlement_is_gauge_invariant(small_random):
    sol, duals = solve_clearing(small_random)
    base = settle(small_random, sol, duals)
    for d in (-50.0, 3.0, 1e3):
        shifted = settle(small_random, sol, duals.shifted(d))
        for name in ("consumer_payments", "generator_revenues", "congestion_rent", "carbon_revenue", "surplus"):
            assert getattr(shifted, name) == pytest.approx(getattr(base, name), rel=1e-9, abs=1e-6)


def test_budget_balance_with_congestion():
    found_rent = False
    for seed in range(20):
        case = random_case(10, 12, 8, seed=seed)
        sol, duals = solve_clearing(case)
        rep = settle(case, sol, duals)
        assert rep.budget_balanced and rep.revenue_adequate
        found_rent |= abs(rep.congestion_rent) > 1.0
    assert found_rent


def test_individual_rationality_uniform_row():
    case = fixture_t1((15, 15, 15))
    sol, duals = solve_clearing(case)
    ir = individual_rationality(case, sol, duals)
    np.testing.assert_allclose(ir.generator_surplus, [20, 50, 0], atol=1e-6)
    np.testing.assert_allclose(ir.consumer_surplus, [0, 0, 0], atol=1e-6)
    assert ir.passed and ir.guaranteed


def test_individual_rationality_row_0_15_5():
    case = fixture_t1((0, 15, 5))
    sol, duals = solve_clearing(case)
    ir = individual_rationality(case, sol, duals)
    assert ir.consumer_surplus[0] == pytest.approx((18 - 6) * 15)
    assert ir.passed


def test_individual_rationality_is_informational_with_must_serve_load():
    # a must-serve load above its utility settles at a loss
    case = SystemCase(
        "must",
        [Bus("a", True)],
        [],
        [Generator("g", "a", 50.0, 0.0, 0, 20)],
        [Consumer("d", "a", 30.0, 0.0, 10, 10)],
    )
    sol, duals = solve_clearing(case)
    ir = individual_rationality(case, sol, duals)
    assert not ir.guaranteed
    assert ir.consumer_surplus[0] == pytest.approx((30 - 50) * 10)
    assert not ir.passed
    idle = individual_rationality(fixture_t1((15, 15, 15)), *solve_clearing(fixture_t1((15, 15, 15))))
    assert idle.generator_surplus[2] == 0  # g3 does not run


def test_equivalence_standard_t1(t1):
    rep = equivalence_standard(t1)
    assert rep.passed
    assert rep.reference_objective == pytest.approx(500)
    assert rep.special_objective == pytest.approx(500)
    assert rep.reference_emissions == pytest.approx(37) and rep.special_emissions == pytest.approx(37)


def test_equivalence_tax_t1(t1):
    rep = equivalence_tax(t1, 15)
    assert rep.passed
    assert rep.reference_gen_cost == pytest.approx(260) and rep.special_gen_cost == pytest.approx(260)
    assert rep.reference_emissions == pytest.approx(14) and rep.special_emissions == pytest.approx(14)
    assert rep.price_gap <= 1e-6
    zero = equivalence_tax(t1, 0)
    assert zero.passed and zero.special_objective == pytest.approx(equivalence_standard(t1).special_objective)
    with pytest.raises(ValueError):
        equivalence_tax(t1, -1)


@pytest.mark.parametrize("tax", [5, 12, 30])
def test_equivalence_tax_random(tax):
    case = random_case(9, 11, 7, seed=tax)
    assert equivalence_tax(case, tax).passed
    assert equivalence_standard(case).passed


def test_single_agent_equivalence():
    case = SystemCase("one", [Bus("a", True)], [], [Generator("g", "a", 5, 0.5, 0, 10)], [Consumer("d", "a", 20, 7, 0, 8)])
    rep = equivalence_standard(case)
    assert rep.passed
    a, _ = solve_standard(case)
    b, _ = solve_clearing(case.with_uniform_carbon_cost(0))
    np.testing.assert_allclose(a.p_g, b.p_g)
