"""
The pairwise barycentric cost c_alpha, the barycentric map T_alpha and the
cost-tensor materialization policy.

    c_alpha(x_1, ..., x_m) = sum_{i<j} |alpha_i x_i - alpha_j x_j|^2
    T_alpha(x_1, ..., x_m) = sum_j alpha_j x_j

Pairs are always accumulated in lexicographic order (1,2), (1,3), ..., (m-1,m),
starting from 0.0, and each pair term is sum_k diff_k * diff_k. Dense tensors,
slabs and single-index evaluations all follow this order, so they agree bit
for bit.
"""

import csv
import logging
from itertools import combinations
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from .constants import CSV_FLOAT_FORMAT
from .exceptions import CapacityError
from .utils import get_tensor_cap

logger = logging.getLogger(__name__)


def _tuple_points(points: Sequence, alpha) -> Tuple[List[np.ndarray], np.ndarray]:
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    vectors = [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in points]
    if len(vectors) != alpha.shape[0]:
        raise ValidationError(f'{len(vectors)} points for {alpha.shape[0]} weights')
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise ValidationError(f'Dimension mismatch between points: {sorted(dims)}')
    return vectors, alpha


def cost_alpha(points: Sequence, alpha) -> float:
    """
    Evaluate c_alpha at one tuple (x_1, ..., x_m).

    Raises:
        ValidationError: on dimension mismatch or len(points) != len(alpha)
    """
    vectors, alpha = _tuple_points(points, alpha)
    total = 0.0
    for i, j in combinations(range(len(vectors)), 2):
        diff = alpha[i] * vectors[i] - alpha[j] * vectors[j]
        total += float(np.sum(diff * diff))
    return total


def t_alpha(points: Sequence, alpha) -> np.ndarray:
    """Barycentric map: sum_j alpha_j x_j."""
    vectors, alpha = _tuple_points(points, alpha)
    image = np.zeros_like(vectors[0])
    for a, x in zip(alpha, vectors):
        image = image + a * x
    return image


def cost_sup_bound(alpha, d: int, m: Optional[int] = None) -> float:
    """
    Upper bound on c_alpha over ([-1, 1]^d)^m: 2 d (m - 1) sum_i alpha_i^2.

    Each pair term is at most 2 (alpha_i^2 |x_i|^2 + alpha_j^2 |x_j|^2) with
    |x|^2 <= d, and every alpha_i^2 appears in m - 1 pairs.
    """
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    m = alpha.shape[0] if m is None else int(m)
    if m <= 1:
        return 0.0
    return 2.0 * d * (m - 1) * float(np.sum(alpha * alpha))


def cost_rows(tuples: np.ndarray, alpha) -> np.ndarray:
    """c_alpha for each row of a (K, m, d) array of point tuples."""
    alpha = np.asarray(alpha, dtype=np.float64)
    total = np.zeros(tuples.shape[0])
    for i, j in combinations(range(tuples.shape[1]), 2):
        diff = alpha[i] * tuples[:, i, :] - alpha[j] * tuples[:, j, :]
        total += np.sum(diff * diff, axis=-1)
    return total


def barycentric_images(tuples: np.ndarray, alpha) -> np.ndarray:
    """T_alpha for each row of a (K, m, d) array of point tuples."""
    alpha = np.asarray(alpha, dtype=np.float64)
    image = np.zeros((tuples.shape[0], tuples.shape[2]))
    for j in range(tuples.shape[1]):
        image = image + alpha[j] * tuples[:, j, :]
    return image


class CostAccessor:
    """
    Access to the cost tensor c_alpha[i_1, ..., i_m] over the marginal supports.

    In 'dense' mode the full tensor (row-major, marginal 1 slowest) is built
    once and cached. In 'lazy' mode nothing is cached: values are recomputed
    per index or per slab of marginal-1 rows. 'auto' picks dense whenever the
    tensor has at most ``tensor_cap`` entries.
    """

    def __init__(self, points: Sequence[np.ndarray], alpha, tensor_cap: Optional[int] = None,
                 mode: str = 'auto'):
        self.points = [np.asarray(p, dtype=np.float64).reshape(len(p), -1) for p in points]
        self.alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
        if len(self.points) != self.alpha.shape[0]:
            raise ValidationError(f'{len(self.points)} supports for {self.alpha.shape[0]} weights')
        if len({p.shape[1] for p in self.points}) > 1:
            raise ValidationError('Dimension mismatch between marginal supports')
        self.shape = tuple(p.shape[0] for p in self.points)
        self.size = int(np.prod(self.shape, dtype=np.int64))
        self.tensor_cap = get_tensor_cap() if tensor_cap is None else int(tensor_cap)

        if mode == 'auto':
            mode = 'dense' if self.size <= self.tensor_cap else 'lazy'
        if mode not in ('dense', 'lazy'):
            raise ValidationError(f'Unknown cost mode "{mode}"')
        if mode == 'dense' and self.size > self.tensor_cap:
            raise CapacityError('dense cost tensor', self.size, self.tensor_cap)
        self.mode = mode
        self._tensor = None
        logger.debug(f'Cost accessor for shape {self.shape} in {mode} mode')

    @classmethod
    def for_problem(cls, problem, **kwargs) -> 'CostAccessor':
        return cls([mu.points for mu in problem.marginals], problem.alpha, **kwargs)

    @property
    def m(self) -> int:
        return len(self.points)

    def _assemble(self, start: int, stop: int) -> np.ndarray:
        """Cost block for marginal-1 rows [start, stop)."""
        supports = list(self.points)
        supports[0] = supports[0][start:stop]
        shape = tuple(p.shape[0] for p in supports)
        total = np.zeros(shape)
        for i, j in combinations(range(self.m), 2):
            diff = self.alpha[i] * supports[i][:, None, :] - self.alpha[j] * supports[j][None, :, :]
            term = np.sum(diff * diff, axis=-1)
            broadcast = [1] * self.m
            broadcast[i], broadcast[j] = shape[i], shape[j]
            total += term.reshape(broadcast)
        return total

    def dense(self) -> np.ndarray:
        """The full tensor. Cached in dense mode; lazy mode refuses above the cap."""
        if self._tensor is not None:
            return self._tensor
        if self.size > self.tensor_cap:
            raise CapacityError('dense cost tensor', self.size, self.tensor_cap)
        tensor = self._assemble(0, self.shape[0])
        tensor.setflags(write=False)
        if self.mode == 'dense':
            self._tensor = tensor
        return tensor

    def slabs(self, rows: int) -> Iterator[Tuple[int, int, np.ndarray]]:
        """
        Yield (start, stop, block) over marginal-1 rows.

        Dense mode yields the cached tensor as a single block.
        """
        if self.mode == 'dense':
            yield 0, self.shape[0], self.dense()
            return
        rows = max(1, int(rows))
        for start in range(0, self.shape[0], rows):
            stop = min(start + rows, self.shape[0])
            yield start, stop, self._assemble(start, stop)

    def value(self, index: Sequence[int]) -> float:
        """Cost at one multi-index, recomputed in the canonical expression order."""
        if len(index) != self.m:
            raise IndexError(f'Multi-index {tuple(index)} has {len(index)} entries, expected {self.m}')
        for j, (i, n) in enumerate(zip(index, self.shape)):
            if not 0 <= i < n:
                raise IndexError(f'Index {i} out of range for marginal {j + 1} with {n} atoms')
        if self._tensor is not None:
            return float(self._tensor[tuple(index)])
        total = 0.0
        for i, j in combinations(range(self.m), 2):
            diff = self.alpha[i] * self.points[i][index[i]] - self.alpha[j] * self.points[j][index[j]]
            total += float(np.sum(diff * diff))
        return total

    def dump_csv(self, handle, rows: int = 64) -> int:
        """
        Write the tensor as CSV: columns i_1..i_m (0-based), cost; one row per multi-index.

        Returns:
            Number of data rows written
        """
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow([f'i_{j + 1}' for j in range(self.m)] + ['cost'])
        written = 0
        for start, _, block in self.slabs(rows):
            for local in np.ndindex(block.shape):
                index = (local[0] + start,) + tuple(local[1:])
                writer.writerow(list(index) + [format(float(block[local]), CSV_FLOAT_FORMAT)])
                written += 1
        return written
