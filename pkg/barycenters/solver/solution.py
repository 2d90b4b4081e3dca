"""
Potential vectors and solver results.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class PotentialVector:
    """The m dual potentials, one array of values per marginal support."""

    values: Tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen = []
        for v in self.values:
            array = np.array(v, dtype=np.float64, copy=True).reshape(-1)
            array.setflags(write=False)
            frozen.append(array)
        object.__setattr__(self, 'values', tuple(frozen))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> 'PotentialVector':
        return cls(tuple(np.zeros(n) for n in shape))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(v.shape[0] for v in self.values)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.values[j]

    def plus(self, other: 'PotentialVector', scale: float = 1.0) -> 'PotentialVector':
        """self + scale * other."""
        return PotentialVector(tuple(a + scale * b for a, b in zip(self.values, other.values)))

    def minus(self, other: 'PotentialVector') -> 'PotentialVector':
        return self.plus(other, -1.0)

    def shifted(self, constants: Sequence[float]) -> 'PotentialVector':
        return PotentialVector(tuple(v + float(c) for v, c in zip(self.values, constants)))

    def normalized(self, weights: Sequence[np.ndarray]) -> 'PotentialVector':
        """
        Re-center f_1..f_{m-1} to nu_k(f_k) = 0 and absorb the shifts into f_m.

        The sum f_1 + ... + f_m (and so the coupling) is unchanged.
        """
        values = [v.copy() for v in self.values]
        absorbed = 0.0
        for k in range(len(values) - 1):
            mean = float(np.dot(weights[k], values[k]))
            values[k] -= mean
            absorbed += mean
        values[-1] += absorbed
        return PotentialVector(tuple(values))

    def restricted(self, supports: Sequence[np.ndarray]) -> 'PotentialVector':
        return PotentialVector(tuple(v[keep] for v, keep in zip(self.values, supports)))

    def expanded(self, supports: Sequence[np.ndarray], shape: Sequence[int]) -> List[List[Optional[float]]]:
        """Values on the original atoms; atoms dropped for zero weight are None."""
        out = []
        for v, keep, n in zip(self.values, supports, shape):
            full: List[Optional[float]] = [None] * int(n)
            for value, index in zip(v.tolist(), keep.tolist()):
                full[index] = value
            out.append(full)
        return out

    def sup_norms(self) -> List[float]:
        return [float(np.max(np.abs(v))) if v.size else 0.0 for v in self.values]


@dataclass(frozen=True, eq=False)
class Solution:
    """
    Outcome of sinkhorn_solve.

    Potentials live on the positive-weight atoms; ``supports[j]`` lists their
    indices among the atoms of marginal j as given.
    """

    potentials: PotentialVector
    dual_value: float
    primal_value: float
    marginal_residual: float
    gradient_norm: float
    iterations: int
    converged: bool
    epsilon: float
    trace: List[Tuple[float, float]] = field(default_factory=list)
    supports: List[np.ndarray] = field(default_factory=list)
    original_shape: Tuple[int, ...] = ()
    problem_hash: str = ''
    monotone: bool = True

    @property
    def duality_gap(self) -> float:
        """primal - dual; equals epsilon at the optimum."""
        return self.primal_value - self.dual_value

    def to_dict(self) -> Dict:
        return {
            'epsilon': self.epsilon,
            'converged': self.converged,
            'iterations': self.iterations,
            'dual_value': self.dual_value,
            'primal_value': self.primal_value,
            'marginal_residual': self.marginal_residual,
            'gradient_norm': self.gradient_norm,
            'monotone': self.monotone,
            'problem_hash': self.problem_hash,
            'potentials': self.potentials.expanded(self.supports, self.original_shape),
            'trace': [{'dual_value': d, 'residual': r} for d, r in self.trace],
        }
