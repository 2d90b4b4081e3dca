"""
Log-domain evaluation of the coupling exponent

    G[i_1, ..., i_m] = (sum_j f_j[i_j] - c[i_1, ..., i_m]) / eps + sum_j log w_j[i_j]

so that the coupling weight at a multi-index is exp(G) and the density with
respect to the product of the marginals is exp(G - sum_j log w_j).

All marginalizations are per-slice max-shifted log-sum-exps
(scipy.special.logsumexp). In lazy mode the tensor is visited in slabs of
marginal-1 rows and partial results are merged with a fixed-shape pairwise
logaddexp tree, so results depend only on the slab size.
"""

from typing import Iterator, List, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from scipy.special import logsumexp

from ..cost import CostAccessor
from ..utils import get_slab_rows


def pairwise_logaddexp(parts: List[np.ndarray]) -> np.ndarray:
    """Reduce with logaddexp along a balanced binary tree in list order."""
    if not parts:
        raise ValueError('nothing to reduce')
    while len(parts) > 1:
        merged = [np.logaddexp(parts[k], parts[k + 1]) for k in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def pairwise_sum(values: List[float]) -> float:
    """Float sum along the same balanced tree shape as pairwise_logaddexp."""
    if not values:
        return 0.0
    while len(values) > 1:
        merged = [values[k] + values[k + 1] for k in range(0, len(values) - 1, 2)]
        if len(values) % 2:
            merged.append(values[-1])
        values = merged
    return float(values[0])


def log_weights(problem) -> List[np.ndarray]:
    """log w_j per marginal; zero weights map to -inf."""
    with np.errstate(divide='ignore'):
        return [np.log(mu.weights) for mu in problem.marginals]


class LogKernel:
    """Slab-wise access to G for a problem and a potential vector."""

    def __init__(self, problem, accessor: CostAccessor = None, slab_rows: int = None):
        self.problem = problem
        self.accessor = accessor or CostAccessor.for_problem(problem)
        self.slab_rows = get_slab_rows() if slab_rows is None else int(slab_rows)
        self.epsilon = problem.epsilon
        self.log_weights = log_weights(problem)
        self.shape = problem.shape
        self.m = problem.m

    def check_shapes(self, values: Sequence[np.ndarray]) -> None:
        if len(values) != self.m:
            raise ValidationError(f'{len(values)} potentials for {self.m} marginals')
        for j, (f, n) in enumerate(zip(values, self.shape)):
            if np.shape(f) != (n,):
                raise ValidationError(
                    f'Potential {j + 1} has shape {np.shape(f)}, marginal has {n} atoms'
                )

    def broadcast_sum(self, vectors: Sequence[np.ndarray], start: int, stop: int) -> np.ndarray:
        """sum_j vectors[j][i_j] over the slab of marginal-1 rows [start, stop)."""
        shape = (stop - start,) + tuple(self.shape[1:])
        total = np.zeros(shape)
        for j, vector in enumerate(vectors):
            piece = vector[start:stop] if j == 0 else vector
            broadcast = [1] * self.m
            broadcast[j] = shape[j]
            total += piece.reshape(broadcast)
        return total

    def blocks(self, values: Sequence[np.ndarray], with_cost: bool = False) -> Iterator[Tuple]:
        """
        Yield (start, stop, G_block), or (start, stop, G_block, cost_block, F_block)
        when ``with_cost`` is set.
        """
        for start, stop, cost in self.accessor.slabs(self.slab_rows):
            potentials = self.broadcast_sum(values, start, stop)
            exponent = (potentials - cost) / self.epsilon + self.broadcast_sum(self.log_weights, start, stop)
            if with_cost:
                yield start, stop, exponent, cost, potentials
            else:
                yield start, stop, exponent

    def log_marginals(self, values: Sequence[np.ndarray], only: int = None) -> List[np.ndarray]:
        """
        log of each marginal of exp(G), i.e. log(w_j * integral of p over the other marginals).

        Args:
            values: potentials, one array per marginal
            only: compute just this marginal (the others come back as None)
        """
        wanted = range(self.m) if only is None else [only]
        first = np.empty(self.shape[0])
        partials = {j: [] for j in wanted if j != 0}
        for start, stop, exponent in self.blocks(values):
            if self.m == 1:
                first[start:stop] = exponent
                continue
            if only is None or only == 0:
                first[start:stop] = logsumexp(exponent, axis=tuple(range(1, self.m)))
            for j in partials:
                axes = tuple(k for k in range(self.m) if k != j)
                partials[j].append(logsumexp(exponent, axis=axes))
        result = [None] * self.m
        if only is None or only == 0:
            result[0] = first
        for j, parts in partials.items():
            result[j] = pairwise_logaddexp(parts)
        return result

    def log_marginal(self, values: Sequence[np.ndarray], j: int) -> np.ndarray:
        return self.log_marginals(values, only=j)[j]

    def log_mass(self, values: Sequence[np.ndarray]) -> float:
        """log of the total mass of exp(G)."""
        return float(logsumexp(self.log_marginal(values, 0)))

    def sums(self, values: Sequence[np.ndarray]) -> Tuple[float, float, float]:
        """
        (sum pi * c, sum pi * log(pi / prod w), sum pi) with pi = exp(G).

        Each is accumulated per slab and merged by pairwise_sum.
        """
        transport, entropy, mass = [], [], []
        for _, _, exponent, cost, potentials in self.blocks(values, with_cost=True):
            weights = np.exp(exponent)
            transport.append(float(np.sum(weights * cost)))
            entropy.append(float(np.sum(weights * (potentials - cost))) / self.epsilon)
            mass.append(float(np.sum(weights)))
        return pairwise_sum(transport), pairwise_sum(entropy), pairwise_sum(mass)
