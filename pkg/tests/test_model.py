import math
from dataclasses import replace

import numpy as np
import pytest

from carbon_clear import (
    Bus,
    CaseValidationError,
    Consumer,
    Generator,
    InvalidDimension,
    Line,
    SystemCase,
    case_issues,
    fixture_t1,
    random_case,
    validate_case,
)


def kinds(case):
    return {i.kind for i in case_issues(case)}


def test_t1_is_valid_and_matches_parameter_table(t1):
    assert validate_case(t1) is t1
    assert (t1.n_bus, t1.n_gen, t1.n_load) == (3, 3, 3)
    g3 = t1.generators[2]
    assert (g3.cost, g3.emission, g3.p_max) == (6.0, 1.0, 25.0)
    np.testing.assert_array_equal(t1.gen_max, [20, 10, 25])
    np.testing.assert_array_equal(t1.gen_cost, [8, 10, 6])
    np.testing.assert_array_equal(t1.emission, [0.6, 0.2, 1.0])
    assert all((d.p_min, d.p_max, d.utility) == (0, 15, 18) for d in t1.consumers)
    assert t1.buses[t1.reference_index].id == "1"
    assert np.all(np.isinf(t1.line_limit))


def test_t1_carbon_costs_are_a_parameter():
    np.testing.assert_array_equal(fixture_t1((0, 15, 5)).carbon_cost, [0, 15, 5])
    with pytest.raises(InvalidDimension):
        fixture_t1((1, 2))


def test_inverted_bounds(t1):
    bad = replace(t1, generators=(replace(t1.generators[0], p_min=10, p_max=5),) + t1.generators[1:])
    assert "InvertedBounds" in kinds(bad)
    with pytest.raises(CaseValidationError) as err:
        validate_case(bad)
    assert any(i.subject == "g1" for i in err.value.issues)


def test_reference_bus_count(t1):
    two = replace(t1, buses=(Bus("1", True), Bus("2", True), Bus("3")))
    none = replace(t1, buses=(Bus("1"), Bus("2"), Bus("3")))
    assert "MultipleReferenceBuses" in kinds(two)
    assert "NoReferenceBus" in kinds(none)


def test_structural_issues(t1):
    dup = replace(t1, generators=t1.generators + (t1.generators[0],))
    assert "DuplicateId" in kinds(dup)
    unknown = replace(t1, consumers=(replace(t1.consumers[0], bus="9"),) + t1.consumers[1:])
    assert "UnknownBus" in kinds(unknown)
    neg = replace(t1, consumers=(replace(t1.consumers[0], p_min=-1),) + t1.consumers[1:])
    assert "NegativeBound" in kinds(neg)
    negative_carbon = replace(t1, consumers=(replace(t1.consumers[0], carbon_cost=-1),) + t1.consumers[1:])
    assert "NegativeBound" in kinds(negative_carbon)
    loop = replace(t1, lines=t1.lines + (Line("2", "2", 1.0),))
    assert "SelfLoop" in kinds(loop)
    zero_b = replace(t1, lines=(Line("1", "2", 0.0),) + t1.lines[1:])
    assert "InvalidSusceptance" in kinds(zero_b)
    islanded = replace(t1, lines=(Line("1", "2", 1.0),))
    assert "DisconnectedNetwork" in kinds(islanded)


def test_aggregate_bounds_precheck(t1):
    must_serve = replace(t1, consumers=tuple(replace(d, p_min=20) for d in t1.consumers))
    assert "InfeasibleAggregateBounds" in kinds(must_serve)
    must_run = replace(t1, generators=tuple(replace(g, p_min=g.p_max) for g in t1.generators))
    assert "InfeasibleAggregateBounds" in kinds(must_run)


def test_validate_is_idempotent(small_random):
    assert validate_case(validate_case(small_random)) == small_random


def test_random_case_deterministic_and_valid():
    a, b = random_case(12, 15, 9, seed=7), random_case(12, 15, 9, seed=7)
    assert a == b
    assert random_case(12, 15, 9, seed=8) != a
    for seed in range(30):
        case = random_case(1 + seed % 20, 1 + seed % 30, 1 + seed % 20, seed=seed)
        assert case_issues(case) == []


def test_random_case_large_seed_and_zero_share():
    case = random_case(73, 158, 51, seed=1)
    assert case_issues(case) == []
    zeros = int(np.sum(case.carbon_cost == 0))
    assert zeros == math.floor(0.25 * 51 + 0.5) == 13
    assert set(np.unique(case.emission)) <= {0.0, 0.6042, 0.7434, 0.9606}
    assert np.all(case.gen_cost[case.emission == 0] == 0)
    assert case_issues(random_case(3, 2, 2, seed=2**64 - 1)) == []
    assert case_issues(random_case(3, 2, 2, seed=-5)) == []


@pytest.mark.parametrize("dims", [(0, 1, 1), (2, 0, 1), (2, 1, 0)])
def test_random_case_rejects_empty_dimensions(dims):
    with pytest.raises(InvalidDimension):
        random_case(*dims, seed=0)


def test_network_matrices(t1):
    # line k from i to j: +beta at i, -beta at j
    fm = t1.flow_matrix
    np.testing.assert_array_equal(fm[0], [1, -1, 0])
    lap = t1.incidence @ fm
    np.testing.assert_allclose(lap, lap.T)
    np.testing.assert_allclose(lap.sum(axis=1), 0)


def test_construct_by_hand_equals_fixture():
    case = SystemCase(
        "t1",
        [Bus("1", True), Bus("2"), Bus("3")],
        [Line("1", "2", 1.0), Line("1", "3", 1.0), Line("2", "3", 1.0)],
        [Generator("g1", "1", 8, 0.6, 0, 20), Generator("g2", "2", 10, 0.2, 0, 10), Generator("g3", "3", 6, 1.0, 0, 25)],
        [Consumer(f"d{i}", str(i), 18, 0, 0, 15) for i in (1, 2, 3)],
    )
    assert case == fixture_t1()
