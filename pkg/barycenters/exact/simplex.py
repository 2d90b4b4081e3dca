"""
Dense two-phase primal simplex for

    minimize c . x  subject to  A x = b, x >= 0

on a full tableau [A | I | b]. Pivots follow Bland's rule (lowest entering
column with negative reduced cost; ratio ties broken by lowest basic
variable), so the pivot sequence is deterministic and cycling cannot occur.
Reduced costs are recomputed from the basis at every pivot.

Phase I minimizes the sum of one artificial variable per row. Artificials
still basic at level zero are pivoted out, or their row is dropped as
redundant. Phase II bars artificial columns from entering.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..exceptions import InfeasibleError, MSBError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
DUALITY_TOL = 1e-10


@dataclass
class SimplexResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    dual_value: float
    pivots: int
    basis: np.ndarray

    @property
    def duality_gap(self) -> float:
        return abs(self.value - self.dual_value)


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    pivot_row = T[row] / T[row, col]
    T -= np.outer(T[:, col], pivot_row)
    T[row] = pivot_row
    T[:, col] = 0.0
    T[row, col] = 1.0
    rhs = T[:, -1]
    rhs[(rhs < 0) & (rhs > -PIVOT_TOL)] = 0.0
    basis[row] = col


def _entering(T: np.ndarray, basis: np.ndarray, cost: np.ndarray, allowed: int):
    reduced = cost[:allowed] - cost[basis] @ T[:, :allowed]
    candidates = np.flatnonzero(reduced < -PIVOT_TOL)
    return int(candidates[0]) if candidates.size else None


def _leaving(T: np.ndarray, basis: np.ndarray, col: int):
    column = T[:, col]
    rows = np.flatnonzero(column > PIVOT_TOL)
    if rows.size == 0:
        return None
    ratios = T[rows, -1] / column[rows]
    tied = rows[ratios <= ratios.min() + PIVOT_TOL]
    return int(tied[np.argmin(basis[tied])])


def _run(T, basis, cost, allowed, max_pivots, pivots):
    while True:
        col = _entering(T, basis, cost, allowed)
        if col is None:
            return pivots
        row = _leaving(T, basis, col)
        if row is None:
            raise MSBError('Linear program is unbounded')
        if pivots >= max_pivots:
            raise MSBError(f'Simplex stopped after {max_pivots} pivots')
        _pivot(T, basis, row, col)
        pivots += 1


def solve_standard_form(c, A, b, max_pivots: int = None) -> SimplexResult:
    """
    Solve min c . x s.t. A x = b, x >= 0.

    Returns:
        SimplexResult with primal x, row duals y (A^T y <= c) and pivot count

    Raises:
        InfeasibleError: if phase I cannot reach zero infeasibility
        MSBError: if the program is unbounded or the pivot limit is reached
    """
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    rows, n = A.shape
    if c.shape[0] != n or b.shape[0] != rows:
        raise ValueError(f'Inconsistent LP dimensions: c {c.shape}, A {A.shape}, b {b.shape}')
    if max_pivots is None:
        max_pivots = 50 * (n + rows)

    signs = np.where(b < 0, -1.0, 1.0)
    T = np.hstack([A * signs[:, None], np.eye(rows), (b * signs)[:, None]])
    basis = np.arange(n, n + rows)

    phase_one = np.concatenate([np.zeros(n), np.ones(rows)])
    pivots = _run(T, basis, phase_one, n + rows, max_pivots, 0)
    infeasibility = float(phase_one[basis] @ T[:, -1])
    if infeasibility > PIVOT_TOL * max(1.0, float(np.abs(b).sum())):
        raise InfeasibleError(f'Linear program is infeasible (phase I residual {infeasibility:.3e})')

    keep = np.ones(T.shape[0], dtype=bool)
    for i in range(T.shape[0]):
        if basis[i] < n:
            continue
        candidates = np.flatnonzero(np.abs(T[i, :n]) > PIVOT_TOL)
        if candidates.size:
            _pivot(T, basis, i, int(candidates[0]))
            pivots += 1
        else:
            keep[i] = False
    if not keep.all():
        logger.debug(f'Dropping {int((~keep).sum())} redundant constraint rows')
        T, basis = T[keep], basis[keep]

    phase_two = np.concatenate([c, np.zeros(rows)])
    pivots = _run(T, basis, phase_two, n, max_pivots, pivots)

    x = np.zeros(n)
    x[basis] = T[:, -1]
    value = float(c @ x)
    duals = (phase_two[basis] @ T[:, n:n + rows]) * signs
    dual_value = float(b @ duals)
    result = SimplexResult(x, value, duals, dual_value, pivots, basis.copy())
    if result.duality_gap > DUALITY_TOL * max(1.0, abs(value)):
        logger.warning(f'Simplex duality gap {result.duality_gap:.3e} at value {value!r}')
    return result
