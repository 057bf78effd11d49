"""Association cost matrices and Murty's k-best 2D assignment.

Rows are measurements. Columns are existing tracks followed by one new-track
column per measurement. Forbidden pairs carry ``+inf`` cost.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InfeasibleAssignmentError

FORBIDDEN = np.inf


@dataclass(frozen=True)
class AssocCostMatrix:
    costs: np.ndarray
    n_tracks: int

    @property
    def gate_mask(self) -> np.ndarray:
        return np.isfinite(self.costs)

    @property
    def n_measurements(self) -> int:
        return self.costs.shape[0]


@dataclass(frozen=True)
class Assignment:
    mapping: tuple[int, ...]
    total_cost: float


def build_cost_matrix(
    detection_log_weights: np.ndarray,
    misdetection_log_weights: np.ndarray,
    new_track_log_weights: np.ndarray,
    gate_mask: np.ndarray | None = None,
) -> AssocCostMatrix:
    """Assemble the ``m x (n + m)`` negative-log-weight matrix.

    ``detection_log_weights[i, j]`` is the log weight of measurement ``i``
    updating track ``j``; ``misdetection_log_weights[j]`` the log weight of
    track ``j`` being missed; ``new_track_log_weights[i]`` the log weight of
    measurement ``i`` starting a new track (or being clutter). Track entries
    are taken relative to the misdetection baseline so that the weight of a
    full association is ``sum(misdetection) - total_cost``.
    """
    det = np.atleast_2d(np.asarray(detection_log_weights, dtype=float))
    new = np.asarray(new_track_log_weights, dtype=float).reshape(-1)
    m = new.size
    det = det.reshape(m, -1)
    n = det.shape[1]
    miss = np.asarray(misdetection_log_weights, dtype=float).reshape(n)
    costs = np.full((m, n + m), FORBIDDEN)
    with np.errstate(invalid="ignore"):
        track_part = -(det - miss[None, :])
    track_part[~np.isfinite(det)] = FORBIDDEN
    track_part[np.isnan(track_part)] = FORBIDDEN
    if gate_mask is not None:
        track_part[~np.asarray(gate_mask, dtype=bool).reshape(m, n)] = FORBIDDEN
    costs[:, :n] = track_part
    costs[np.arange(m), n + np.arange(m)] = -new
    return AssocCostMatrix(costs, n)


def _costs_of(c) -> np.ndarray:
    return c.costs if isinstance(c, AssocCostMatrix) else np.asarray(c, dtype=float)


def _solve(C: np.ndarray):
    try:
        rows, cols = linear_sum_assignment(C)
    except ValueError:
        return None
    if rows.size < C.shape[0]:
        return None
    total = C[rows, cols].sum()
    if not np.isfinite(total):
        return None
    return cols, float(total)


def _raise_infeasible(C: np.ndarray):
    dead = np.flatnonzero(~np.isfinite(C).any(axis=1))
    if dead.size:
        row = int(dead[0])
        raise InfeasibleAssignmentError(f"row {row} has no admissible column", row)
    raise InfeasibleAssignmentError("cost matrix admits no complete assignment")


def murty_kbest(c, k: int) -> list[Assignment]:
    """The ``k`` lowest-cost assignments of every row to a distinct column.

    Murty's partitioning over an exact linear assignment solver. Results are in
    nondecreasing cost; equal costs come out in a fixed order for a given input.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    C = _costs_of(c)
    nrows = C.shape[0]
    if nrows == 0:
        return [Assignment((), 0.0)]
    first = _solve(C)
    if first is None:
        _raise_infeasible(C)
    counter = 0
    heap = [(first[1], counter, tuple(int(j) for j in first[0]), C)]
    out: list[Assignment] = []
    while heap and len(out) < k:
        cost, _, sol, node = heapq.heappop(heap)
        out.append(Assignment(sol, cost))
        if len(out) == k:
            break
        work = node.copy()
        for i in range(nrows):
            j = sol[i]
            child = work.copy()
            child[i, j] = FORBIDDEN
            res = _solve(child)
            if res is not None:
                counter += 1
                heapq.heappush(heap, (res[1], counter, tuple(int(x) for x in res[0]), child))
            keep = work[i, j]
            work[i, :] = FORBIDDEN
            work[:, j] = FORBIDDEN
            work[i, j] = keep
    return out


def _components(finite: np.ndarray) -> list[np.ndarray]:
    """Groups of rows connected through columns admissible for several rows."""
    nrows = finite.shape[0]
    parent = list(range(nrows))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    shared = np.flatnonzero(finite.sum(axis=0) >= 2)
    for col in shared:
        rows = np.flatnonzero(finite[:, col])
        root = find(rows[0])
        for r in rows[1:]:
            other = find(r)
            if other != root:
                parent[other] = root
    groups: dict[int, list[int]] = {}
    for r in range(nrows):
        groups.setdefault(find(r), []).append(r)
    return [np.array(g) for g in groups.values()]


def _merge_kbest(a: list, b: list, k: int) -> list:
    """Best ``k`` pairwise sums of two sorted (cost, parts) lists."""
    if not a or not b:
        return []
    heap = [(a[0][0] + b[0][0], 0, 0)]
    seen = {(0, 0)}
    out = []
    while heap and len(out) < k:
        cost, i, j = heapq.heappop(heap)
        out.append((cost, a[i][1] + b[j][1]))
        for ni, nj in ((i + 1, j), (i, j + 1)):
            if ni < len(a) and nj < len(b) and (ni, nj) not in seen:
                seen.add((ni, nj))
                heapq.heappush(heap, (a[ni][0] + b[nj][0], ni, nj))
    return out


def kbest_decomposed(c, k: int) -> list[Assignment]:
    """Same result set as :func:`murty_kbest`, computed per independent cluster.

    Rows that share no admissible column are solved separately and the
    per-cluster ranked lists are combined, which is exact and far cheaper when
    targets are well separated.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    C = _costs_of(c)
    nrows = C.shape[0]
    if nrows == 0:
        return [Assignment((), 0.0)]
    if k == 1:
        # A single exact solve beats clustering for the best assignment alone.
        best = _solve(C)
        if best is None:
            _raise_infeasible(C)
        return [Assignment(tuple(int(j) for j in best[0]), best[1])]
    finite = np.isfinite(C)
    dead = np.flatnonzero(~finite.any(axis=1))
    if dead.size:
        _raise_infeasible(C)
    mapping0 = np.full(nrows, -1)
    single = finite.sum(axis=1) == 1
    only_col = np.argmax(finite, axis=1)
    col_use = finite.sum(axis=0)
    # A row with one admissible column nobody else can take is fixed.
    fixed = single & (col_use[only_col] == 1)
    mapping0[fixed] = only_col[fixed]
    combined = [(0.0, ())]
    for rows in _components(finite):
        if rows.size == 1 and fixed[rows[0]]:
            continue
        if rows.size == 1:
            r = int(rows[0])
            cols = np.flatnonzero(finite[r])
            order = np.argsort(C[r, cols], kind="stable")[:k]
            ranked = [(float(C[r, cols[o]]), ((r, int(cols[o])),)) for o in order]
        else:
            cols = np.flatnonzero(finite[rows].any(axis=0))
            sub = C[np.ix_(rows, cols)]
            ranked = [
                (a.total_cost, tuple((int(r), int(cols[j])) for r, j in zip(rows, a.mapping)))
                for a in murty_kbest(sub, k)
            ]
        combined = _merge_kbest(combined, ranked, k)
    out = []
    for cost, parts in combined:
        mapping = mapping0.copy()
        for r, col in parts:
            mapping[r] = col
        out.append(Assignment(tuple(int(j) for j in mapping), float(C[np.arange(nrows), mapping].sum())))
    return out


def kbest_budget(hypothesis_log_weight: float, total_budget: int) -> int:
    """Number of assignments to request for a hypothesis of the given normalised log weight."""
    share = total_budget * math.exp(hypothesis_log_weight)
    return max(1, math.ceil(share - 1e-9))

