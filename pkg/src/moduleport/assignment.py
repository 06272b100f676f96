"""Rectangular linear sum assignment: production solver plus a brute-force oracle.

Both solvers take a cost matrix with rows <= cols and return the
injective row->column map of minimum total cost. Callers that maximize a
score negate it first; the reported ``total_score`` is the negated
optimal cost, i.e. the total of the original (pre-negation) scores.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import SizeLimitError, StudentWiderThanTeacherError
from .matrix import Matrix, as_matrix

BRUTE_FORCE_MAX_COLS = 9


@dataclass(frozen=True)
class AssignmentSolution:
    """Injective map from row index to column index with its total score.

    ``mapping[i]`` is the column assigned to row i; no column repeats.
    ``total_score`` is ``-sum(cost[i, mapping[i]])``, so when the cost
    matrix is a negated score matrix this is the (maximized) score sum.
    """

    mapping: tuple[int, ...]
    total_score: float


def _score_of(cost: Matrix, mapping) -> float:
    # Plain left-to-right accumulation so solver and oracle produce
    # bit-identical totals for identical assignments.
    total = 0.0
    for i, j in enumerate(mapping):
        total += float(cost[i, j])
    return -total


def _check_cost(cost, *, name: str) -> Matrix:
    cost = as_matrix(cost, name=name)
    if cost.shape[0] > cost.shape[1]:
        raise StudentWiderThanTeacherError(
            f"{name} has more rows than columns ({cost.shape[0]}x{cost.shape[1]}); "
            "only row-count <= column-count instances are supported"
        )
    return cost


def solve_lsa(cost: Matrix) -> AssignmentSolution:
    """Minimum-cost injective assignment via shortest augmenting paths.

    Jonker-Volgenant style: one Dijkstra-like sweep per row over the
    reduced costs, followed by a dual update and path augmentation.
    O(rows^2 * cols) with vectorized column scans.
    """
    cost = _check_cost(cost, name="cost")
    nr, nc = cost.shape

    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1, dtype=np.int64)
    row4col = np.full(nc, -1, dtype=np.int64)

    for cur_row in range(nr):
        path = np.full(nc, -1, dtype=np.int64)
        shortest = np.full(nc, np.inf)
        remaining = np.ones(nc, dtype=bool)
        visited_rows = np.zeros(nr, dtype=bool)
        visited_cols = np.zeros(nc, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            visited_rows[i] = True
            rem = np.nonzero(remaining)[0]
            reduced = min_val + cost[i, rem] - u[i] - v[rem]
            better = reduced < shortest[rem]
            upd = rem[better]
            shortest[upd] = reduced[better]
            path[upd] = i

            dists = shortest[rem]
            lowest = dists.min()
            ties = rem[dists == lowest]
            free = ties[row4col[ties] == -1]
            j = int(free[0]) if free.size else int(ties[0])

            min_val = float(lowest)
            visited_cols[j] = True
            remaining[j] = False
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])

        # Dual update keeps reduced costs nonnegative on visited nodes.
        u[cur_row] += min_val
        others = visited_rows.copy()
        others[cur_row] = False
        idx = np.nonzero(others)[0]
        u[idx] += min_val - shortest[col4row[idx]]
        cols = np.nonzero(visited_cols)[0]
        v[cols] -= min_val - shortest[cols]

        # Augment along the alternating path back to cur_row.
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur_row:
                break

    mapping = tuple(int(j) for j in col4row)
    return AssignmentSolution(mapping=mapping, total_score=_score_of(cost, mapping))


def brute_force_lsa(cost: Matrix) -> AssignmentSolution:
    """Exhaustive minimum over all injective row->column maps.

    Test oracle only: guarded at cols <= 9 to keep the factorial
    enumeration tractable.
    """
    cost = _check_cost(cost, name="cost")
    nr, nc = cost.shape
    if nc > BRUTE_FORCE_MAX_COLS:
        raise SizeLimitError(
            f"brute force limited to {BRUTE_FORCE_MAX_COLS} columns, got {nc}"
        )

    best_mapping = None
    best_total = np.inf
    for perm in itertools.permutations(range(nc), nr):
        total = 0.0
        for i, j in enumerate(perm):
            total += cost[i, j]
        if total < best_total:
            best_total = total
            best_mapping = perm

    assert best_mapping is not None
    return AssignmentSolution(
        mapping=tuple(best_mapping), total_score=_score_of(cost, best_mapping)
    )
