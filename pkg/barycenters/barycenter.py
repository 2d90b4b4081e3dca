"""
The Schrodinger barycenter: the pushforward of the optimal coupling through
T_alpha, and expectations against it and against the coupling itself.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, Tuple

import numpy as np

from .cost import barycentric_images
from .exceptions import CapacityError, NonConvergenceError
from .measures import DiscreteMeasure, consolidate_atoms
from .solver.dual import solved_problem
from .solver.kernel import LogKernel, pairwise_sum
from .solver.solution import Solution
from .utils import get_enumeration_cap

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BarycenterMeasure:
    """A barycenter together with the problem fingerprint and epsilon it came from."""

    measure: DiscreteMeasure
    problem_hash: str
    epsilon: float

    @property
    def points(self) -> np.ndarray:
        return self.measure.points

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    @property
    def size(self) -> int:
        return self.measure.size

    def to_dict(self) -> Dict:
        return {
            **self.measure.to_dict(),
            'problem_hash': self.problem_hash,
            'epsilon': self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'BarycenterMeasure':
        return cls(DiscreteMeasure.from_dict(data), data.get('problem_hash', ''),
                   float(data.get('epsilon', 0.0)))


def _require(sol: Solution, prob):
    if not sol.converged:
        raise NonConvergenceError(
            f'Solution did not converge (residual {sol.marginal_residual:.3e} after {sol.iterations} sweeps)'
        )
    solved = solved_problem(sol, prob)
    cap = get_enumeration_cap()
    if solved.size > cap:
        raise CapacityError('coupling enumeration', solved.size, cap)
    return solved


def _slab_tuples(prob, start: int, stop: int) -> np.ndarray:
    """Point tuples of marginal-1 rows [start, stop), row-major, as a (K, m, d) array."""
    shape = (stop - start,) + tuple(prob.shape[1:])
    grid = np.indices(shape).reshape(prob.m, -1)
    grid[0] += start
    return np.stack([mu.points[grid[j]] for j, mu in enumerate(prob.marginals)], axis=1)


def enumerate_coupling(sol: Solution, prob) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yield (tuples, weights) slab by slab over the full coupling, multi-indices in
    row-major order with marginal 1 slowest.

    Raises:
        NonConvergenceError: if the solution did not converge
        CapacityError: above the enumeration cap
    """
    solved = _require(sol, prob)
    kernel = LogKernel(solved)
    for start, stop, exponent in kernel.blocks(sol.potentials.values):
        yield _slab_tuples(solved, start, stop), np.exp(exponent).reshape(-1)


def compute_barycenter(sol: Solution, prob, consolidate: bool = True) -> BarycenterMeasure:
    """
    Push the coupling through T_alpha.

    Every multi-index contributes an atom at T_alpha(x_{i_1}, ..., x_{i_m}) with
    its coupling weight; consolidation merges atoms equal within
    MSB_CONSOLIDATE_TOL and sorts them lexicographically.
    """
    points, weights = [], []
    for tuples, slab_weights in enumerate_coupling(sol, prob):
        points.append(np.clip(barycentric_images(tuples, prob.alpha), -1.0, 1.0))
        weights.append(slab_weights)
    points = np.concatenate(points)
    weights = np.concatenate(weights)
    if consolidate:
        before = points.shape[0]
        points, weights = consolidate_atoms(points, weights)
        logger.debug(f'Barycenter consolidated from {before} to {points.shape[0]} atoms')
    return BarycenterMeasure(DiscreteMeasure(points, weights), sol.problem_hash, sol.epsilon)


def pushforward_coupling(entries, prob, consolidate: bool = True) -> DiscreteMeasure:
    """
    (T_alpha)_# of a sparse coupling given as (multi-index, weight) pairs over
    the problem's atoms, e.g. the coupling of an LPSolveReport.
    """
    entries = [(tuple(index), float(weight)) for index, weight in entries]
    tuples = np.stack([
        np.stack([prob.marginals[j].points[i] for j, i in enumerate(index)])
        for index, _ in entries
    ])
    points = np.clip(barycentric_images(tuples, prob.alpha), -1.0, 1.0)
    weights = np.array([weight for _, weight in entries])
    if consolidate:
        points, weights = consolidate_atoms(points, weights)
    return DiscreteMeasure(points, weights)


def integrate(measure, h: Callable[[np.ndarray], np.ndarray]) -> float:
    """mu(h) = sum_i w_i h(x_i) for a DiscreteMeasure or BarycenterMeasure."""
    values = np.asarray(h(measure.points), dtype=np.float64).reshape(-1)
    return float(np.dot(measure.weights, values))


def coupling_expectation(sol: Solution, prob, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    pi(g) = sum over multi-indices of g(x_{i_1}, ..., x_{i_m}) * p * prod_j w_j.

    ``g`` receives a (K, m, d) array of point tuples and returns K values.
    """
    parts = []
    for tuples, slab_weights in enumerate_coupling(sol, prob):
        values = np.asarray(g(tuples), dtype=np.float64).reshape(-1)
        parts.append(float(np.dot(slab_weights, values)))
    return pairwise_sum(parts)
