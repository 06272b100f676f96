import numpy as np
import pytest

from moduleport.assignment import AssignmentSolution, brute_force_lsa, solve_lsa
from moduleport.errors import SizeLimitError, StudentWiderThanTeacherError


def selected_cost(cost, mapping):
    total = 0.0
    for i, j in enumerate(mapping):
        total += float(cost[i, j])
    return total


class TestSolveLsa:
    def test_two_by_two(self):
        cost = -np.array([[0.9, 0.1], [0.2, 0.8]])
        sol = solve_lsa(cost)
        assert sol.mapping == (0, 1)
        assert sol.total_score == pytest.approx(1.7)

    def test_rectangular(self):
        cost = -np.array([[0.1, 0.9, 0.3], [0.8, 0.2, 0.4]])
        sol = solve_lsa(cost)
        assert sol.mapping == (1, 0)
        assert sol.total_score == pytest.approx(1.7)

    def test_negated_identity(self):
        for n in (1, 3, 6):
            sol = solve_lsa(-np.eye(n))
            assert sol.mapping == tuple(range(n))

    def test_rejects_wide_rows(self):
        with pytest.raises(StudentWiderThanTeacherError):
            solve_lsa(np.ones((3, 2)))

    def test_score_matches_selected_entries(self):
        rng = np.random.default_rng(0)
        cost = rng.uniform(-1, 1, (5, 8))
        sol = solve_lsa(cost)
        assert sol.total_score == pytest.approx(-selected_cost(cost, sol.mapping), abs=1e-9)


class TestBruteForce:
    def test_one_by_one(self):
        sol = brute_force_lsa(np.array([[3.0]]))
        assert sol.mapping == (0,)

    def test_degenerate_ties(self):
        sol = brute_force_lsa(np.full((3, 3), 0.4))
        assert sorted(sol.mapping) == [0, 1, 2]
        assert sol.total_score == pytest.approx(-1.2)

    def test_size_guard(self):
        with pytest.raises(SizeLimitError):
            brute_force_lsa(np.ones((2, 10)))

    def test_agrees_with_solver_on_examples(self):
        for cost in (
            -np.array([[0.9, 0.1], [0.2, 0.8]]),
            -np.array([[0.1, 0.9, 0.3], [0.8, 0.2, 0.4]]),
        ):
            assert brute_force_lsa(cost).total_score == solve_lsa(cost).total_score


class TestProperties:
    def test_oracle_equivalence_random(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            nr = int(rng.integers(1, 8))
            nc = int(rng.integers(nr, 8))
            cost = rng.uniform(-1, 1, (nr, nc))
            fast = solve_lsa(cost)
            slow = brute_force_lsa(cost)
            assert fast.total_score == slow.total_score
            assert len(set(fast.mapping)) == nr

    def test_constant_shift_preserves_argmin(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            nr = int(rng.integers(2, 6))
            nc = int(rng.integers(nr, 7))
            cost = rng.uniform(-1, 1, (nr, nc))
            shift = float(rng.normal())
            base = brute_force_lsa(cost)
            shifted = brute_force_lsa(cost + shift)
            assert selected_cost(cost + shift, base.mapping) == pytest.approx(
                selected_cost(cost + shift, shifted.mapping)
            )
            # optimal cost moves by rows * shift
            assert -shifted.total_score == pytest.approx(-base.total_score + nr * shift)

    def test_column_permutation_permutes_mapping(self):
        rng = np.random.default_rng(11)
        hits = 0
        for _ in range(50):
            nr, nc = 4, 6
            cost = rng.uniform(-1, 1, (nr, nc))
            base = solve_lsa(cost)
            perm = rng.permutation(nc)
            permuted = solve_lsa(cost[:, perm])
            # column j of the permuted matrix is column perm[j] of the original
            recovered = tuple(int(perm[j]) for j in permuted.mapping)
            if recovered == base.mapping:
                hits += 1
            assert selected_cost(cost, recovered) == pytest.approx(
                -base.total_score, abs=1e-9
            )
        # random continuous costs have unique optima almost surely
        assert hits == 50

    def test_frozen_solution_type(self):
        sol = AssignmentSolution(mapping=(0,), total_score=1.0)
        with pytest.raises(AttributeError):
            sol.total_score = 2.0
