"""
Exact (unregularized) transport oracles: multimarginal OT under c_alpha and
discrete W_1 / W_2, all solved with the dense Bland simplex.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from ..constants import CSV_FLOAT_FORMAT
from ..cost import CostAccessor
from ..exceptions import CapacityError, InfeasibleError
from ..measures import DiscreteMeasure
from ..utils import get_lp_cap
from .simplex import solve_standard_form

logger = logging.getLogger(__name__)

STATUS_OPTIMAL = 'optimal'
STATUS_INFEASIBLE = 'infeasible'
STATUS_CAP_EXCEEDED = 'cap-exceeded'


@dataclass
class LPSolveReport:
    """
    Result of exact_mot. ``coupling`` lists the nonzero (multi-index, weight)
    pairs, indices counted over the atoms of each marginal as given.
    """

    value: float
    coupling: List[Tuple[Tuple[int, ...], float]] = field(default_factory=list)
    status: str = STATUS_OPTIMAL
    pivots: int = 0
    dual_value: float = float('nan')
    shape: Tuple[int, ...] = ()

    @property
    def duality_gap(self) -> float:
        return abs(self.value - self.dual_value)

    def dense(self) -> np.ndarray:
        """The coupling as a dense tensor over the original atoms."""
        tensor = np.zeros(self.shape)
        for index, weight in self.coupling:
            tensor[index] = weight
        return tensor

    def to_dict(self) -> Dict:
        return {
            'status': self.status,
            'value': self.value,
            'dual_value': self.dual_value,
            'pivots': self.pivots,
            'shape': list(self.shape),
            'coupling': [{'index': list(index), 'weight': weight} for index, weight in self.coupling],
        }

    def write_coupling_csv(self, handle) -> int:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow([f'i_{j + 1}' for j in range(len(self.shape))] + ['weight'])
        for index, weight in self.coupling:
            writer.writerow(list(index) + [format(weight, CSV_FLOAT_FORMAT)])
        return len(self.coupling)


def marginal_constraints(shape: Tuple[int, ...]) -> np.ndarray:
    """
    0/1 matrix with one row per (marginal j, atom i): the row sums the
    variables whose j-th index is i. Variables are multi-indices in row-major order.
    """
    size = int(np.prod(shape, dtype=np.int64))
    grid = np.indices(shape).reshape(len(shape), -1)
    A = np.zeros((sum(shape), size))
    offset = 0
    for j, n in enumerate(shape):
        A[offset + grid[j], np.arange(size)] = 1.0
        offset += n
    return A


def _solve_transport(cost: np.ndarray, weights: List[np.ndarray]):
    A = marginal_constraints(cost.shape)
    return solve_standard_form(cost.reshape(-1), A, np.concatenate(weights))


def exact_mot(prob, lp_cap: Optional[int] = None, strict: bool = True) -> LPSolveReport:
    """
    Minimize <c_alpha, pi> over couplings of the problem's marginals (epsilon is ignored).

    Zero-weight atoms are stripped before solving and reported under their
    original indices.

    Args:
        prob: Problem
        lp_cap: variable cap (default MSB_LP_CAP)
        strict: raise on cap or infeasibility; otherwise report the status

    Raises:
        CapacityError: if prod N_j exceeds the cap (strict)
        InfeasibleError: if the marginals cannot be coupled (strict)
    """
    cap = get_lp_cap() if lp_cap is None else int(lp_cap)
    solved, supports = prob.stripped()
    if solved.size > cap:
        if strict:
            raise CapacityError('multimarginal LP', solved.size, cap)
        return LPSolveReport(float('nan'), status=STATUS_CAP_EXCEEDED, shape=prob.shape)

    cost = CostAccessor.for_problem(solved).dense()
    try:
        result = _solve_transport(cost, [mu.weights for mu in solved.marginals])
    except InfeasibleError:
        if strict:
            raise
        return LPSolveReport(float('nan'), status=STATUS_INFEASIBLE, shape=prob.shape)

    coupling = []
    for flat in np.flatnonzero(result.x > 0):
        local = np.unravel_index(flat, solved.shape)
        index = tuple(int(keep[i]) for keep, i in zip(supports, local))
        coupling.append((index, float(result.x[flat])))
    logger.debug(f'Exact MOT on {solved.shape}: value {result.value!r} after {result.pivots} pivots')
    return LPSolveReport(
        value=result.value,
        coupling=coupling,
        status=STATUS_OPTIMAL,
        pivots=result.pivots,
        dual_value=result.dual_value,
        shape=prob.shape,
    )


def _prepared(mu: DiscreteMeasure) -> Tuple[np.ndarray, np.ndarray]:
    keep = mu.weights > 0
    weights = mu.weights[keep]
    return mu.points[keep], weights / weights.sum()


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int) -> None:
    if p not in (1, 2):
        raise ValidationError(f'p must be 1 or 2, got {p}')
    if mu.dimension != nu.dimension:
        raise ValidationError(f'Dimension mismatch: {mu.dimension} vs {nu.dimension}')


def quantile_wasserstein_power(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int) -> float:
    """W_p^p on the line by matching quantile functions."""
    _check_pair(mu, nu, p)
    if mu.dimension != 1:
        raise ValidationError('Quantile matching needs d = 1')
    xs, xw = _prepared(mu)
    ys, yw = _prepared(nu)
    x_order, y_order = np.argsort(xs[:, 0], kind='stable'), np.argsort(ys[:, 0], kind='stable')
    xs, xw = xs[x_order, 0], xw[x_order]
    ys, yw = ys[y_order, 0], yw[y_order]
    x_cdf, y_cdf = np.cumsum(xw), np.cumsum(yw)
    x_cdf[-1] = y_cdf[-1] = 1.0
    levels = np.union1d(x_cdf, y_cdf)
    masses = np.diff(np.concatenate(([0.0], levels)))
    i = np.minimum(np.searchsorted(x_cdf, levels, side='left'), xs.shape[0] - 1)
    j = np.minimum(np.searchsorted(y_cdf, levels, side='left'), ys.shape[0] - 1)
    return float(np.dot(masses, np.abs(xs[i] - ys[j]) ** p))


def lp_wasserstein_power(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int,
                         lp_cap: Optional[int] = None) -> float:
    """W_p^p as a two-marginal LP with ground cost ||x - y||^p."""
    _check_pair(mu, nu, p)
    xs, xw = _prepared(mu)
    ys, yw = _prepared(nu)
    cap = get_lp_cap() if lp_cap is None else int(lp_cap)
    size = xs.shape[0] * ys.shape[0]
    if size > cap:
        raise CapacityError('W_p transport LP', size, cap)
    diff = xs[:, None, :] - ys[None, :, :]
    squared = np.sum(diff * diff, axis=-1)
    cost = squared if p == 2 else np.sqrt(squared)
    return _solve_transport(cost, [xw, yw]).value


def wasserstein_p_power(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int,
                        lp_cap: Optional[int] = None) -> float:
    """
    W_p^p(mu, nu), the optimal value of the transport LP. On the line the
    quantile-matching solution is used and no cap applies.
    """
    _check_pair(mu, nu, p)
    if mu.dimension == 1:
        return quantile_wasserstein_power(mu, nu, p)
    return lp_wasserstein_power(mu, nu, p, lp_cap)


def wasserstein_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int,
                  lp_cap: Optional[int] = None) -> float:
    """The p-Wasserstein distance, (W_p^p) ** (1 / p)."""
    return max(wasserstein_p_power(mu, nu, p, lp_cap), 0.0) ** (1.0 / p)
