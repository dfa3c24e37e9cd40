import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from MODRED.ALGO.SignOptimization import (
    SignProblem,
    SignSolution,
    alternating_start,
    branch_and_bound,
    local_search,
    lp_lower_bound,
    solve_exhaustive,
    solve_signs,
    tower_greedy,
)
from MODRED.base.utils import BudgetExceededException

DELTA_STAR = 0.4407
GREEDY_REFERENCE = {5: 1.0090, 6: 1.7171, 7: 3.6695, 8: 5.4939, 9: 10.2915, 10: 15.0354}
LP_REFERENCE = {4: 0.4407, 5: 0.4407, 6: 0.3753, 7: 0.3487, 8: 0.3123, 9: 0.2880, 10: 0.2729}


@pytest.fixture(scope="module")
def optimum():
    return {k: solve_exhaustive(SignProblem.for_k(k)) for k in (4, 5, 6)}


@pytest.mark.parametrize("k", [4, 5, 6])
def test_exhaustive_optimum(optimum, k):
    sol = optimum[k]
    assert sol.status == "optimal"
    assert sol.balanced
    assert sol.N_s == 2 ** (k - 2) - 1
    assert sol.discrepancy == pytest.approx(DELTA_STAR, abs=5e-4)
    assert sol.discrepancy == pytest.approx(SignProblem.for_k(k).discrepancy(sol.s))


def test_exhaustive_budget():
    with pytest.raises(BudgetExceededException):
        solve_exhaustive(SignProblem.for_k(6), limit=7)


def test_tower_greedy_is_deterministic():
    prob = SignProblem.for_k(5)
    first, second = tower_greedy(prob), tower_greedy(prob)
    assert first.discrepancy == pytest.approx(1.0090, abs=5e-3)
    assert np.array_equal(first.s, second.s)
    assert first.status == "heuristic"


@pytest.mark.parametrize("k", [4, 5])
def test_branch_and_bound_matches_exhaustive(optimum, k):
    sol = branch_and_bound(SignProblem.for_k(k))
    assert sol.status == "optimal"
    assert sol.balanced
    assert sol.discrepancy == pytest.approx(optimum[k].discrepancy, abs=1e-9)
    assert sol.lower_bound <= sol.discrepancy + 1e-9


def test_branch_and_bound_from_greedy_incumbent(optimum):
    prob = SignProblem.for_k(5)
    sol = branch_and_bound(prob, incumbent=tower_greedy(prob))
    assert sol.discrepancy == pytest.approx(optimum[5].discrepancy, abs=1e-9)


@pytest.mark.parametrize("k", [4, 5, 6])
def test_lp_bounds_are_ordered(optimum, k):
    prob = SignProblem.for_k(k)
    interval = lp_lower_bound(prob, "interval")
    disjunction = lp_lower_bound(prob, "disjunction")
    assert 0.0 <= interval <= disjunction + 1e-9
    assert disjunction <= optimum[k].discrepancy + 1e-9


@pytest.mark.parametrize("k", sorted(GREEDY_REFERENCE))
def test_tower_greedy_reference_values(k):
    prob = SignProblem.for_k(k)
    assert tower_greedy(prob).discrepancy == pytest.approx(GREEDY_REFERENCE[k], abs=1e-2)


@pytest.mark.parametrize("k", sorted(LP_REFERENCE))
def test_lp_lower_bound_reference_values(k):
    prob = SignProblem.for_k(k)
    assert lp_lower_bound(prob) == pytest.approx(LP_REFERENCE[k], abs=1e-3)
    assert lp_lower_bound(prob, "interval") == pytest.approx(0.0, abs=1e-9)


@pytest.mark.slow
def test_branch_and_bound_at_k7():
    prob = SignProblem.for_k(7)
    sol = branch_and_bound(prob)
    assert sol.balanced
    assert sol.discrepancy == pytest.approx(DELTA_STAR, abs=5e-4)
    assert lp_lower_bound(prob) - 1e-6 <= sol.lower_bound <= sol.discrepancy + 1e-9
    assert sol.discrepancy <= tower_greedy(prob).discrepancy


def test_lp_rejects_unknown_balance():
    with pytest.raises(ValueError):
        lp_lower_bound(SignProblem.for_k(4), "exact")


def test_local_search(optimum):
    small = local_search(SignProblem.for_k(4))
    assert small.discrepancy == pytest.approx(optimum[4].discrepancy, abs=1e-9)
    prob = SignProblem.for_k(6)
    a, b = local_search(prob, seed=3), local_search(prob, seed=3)
    assert a.balanced
    assert a.s.sum() == 1
    assert a.discrepancy >= optimum[6].discrepancy - 1e-9
    assert np.array_equal(a.s, b.s)


def test_alternating_start_is_balanced():
    s = alternating_start(SignProblem.for_k(7))
    assert s.sum() == 1
    assert set(np.unique(s)) == {-1.0, 1.0}


@given(st.permutations(list(range(15))), st.booleans())
@settings(max_examples=60, deadline=None)
def test_no_balanced_vector_beats_the_optimum(optimum, perm, negate):
    prob = SignProblem.for_k(6)
    s = -np.ones(15)
    s[perm[:8]] = 1.0
    if negate:
        s = -s
    assert prob.discrepancy(s) == pytest.approx(prob.discrepancy(-s))
    assert prob.discrepancy(s) >= optimum[6].discrepancy - 1e-12


class TestSolveSigns:
    def test_no_signs_below_k4(self):
        assert solve_signs(3) is None
        assert solve_signs(5, "none") is None

    def test_milp_and_greedy(self):
        assert solve_signs(5).discrepancy == pytest.approx(DELTA_STAR, abs=5e-4)
        assert solve_signs(5, "greedy").method == "greedy"

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve_signs(5, "anneal")


def test_sign_solution_validation():
    with pytest.raises(ValueError):
        SignSolution(np.array([1, 0, -1]), 0.5, "optimal", "exhaustive")
    with pytest.raises(ValueError):
        SignSolution(np.array([1, 1, -1]), 0.5, "proven", "exhaustive")
    sol = SignSolution(np.array([1, 1, -1]), 0.5, "heuristic", "greedy", k=4)
    assert sol.to_dict()["s"] == [1, 1, -1]
    assert sol.to_dict()["N_s"] == 3
