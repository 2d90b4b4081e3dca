"""
Discrete probability measures on [-1, 1]^d, finitely supported populations
and reproducible i.i.d. sampling into empirical measures.

Sampling uses numpy's Philox4x64 counter-based generator. A 64-bit seed is
expanded with ``numpy.random.SeedSequence(seed)`` into the Philox key; draws
are ``Generator.random(N)`` uniforms mapped by inverse CDF over the population
atoms in their input order (``searchsorted(cdf, u, side='right')``).
"""

import hashlib
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from .utils import get_consolidate_tol


WEIGHT_SUM_TOL = 1e-12
SEED_LIMIT = 2 ** 64


def _as_points(points) -> np.ndarray:
    """Coerce points to a float64 (n, d) array; a flat list means d = 1."""
    array = np.asarray(points, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    return array


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud: ``points`` is (n, d), ``weights`` is (n,)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'points', _frozen(_as_points(self.points)))
        object.__setattr__(self, 'weights', _frozen(np.asarray(self.weights, dtype=np.float64).reshape(-1)))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def check(self) -> None:
        """Raise ValidationError naming the first violated invariant."""
        report = validate(self)
        if not report.ok:
            raise ValidationError(report.violation)

    def support(self) -> Tuple['DiscreteMeasure', np.ndarray]:
        """
        Drop zero-weight atoms.

        Returns:
            (measure on the positive-weight atoms, their indices in this measure)
        """
        keep = np.flatnonzero(self.weights > 0)
        if keep.size == self.size:
            return self, keep
        return DiscreteMeasure(self.points[keep], self.weights[keep]), keep

    def consolidated(self, tol: Optional[float] = None) -> 'DiscreteMeasure':
        """Merge atoms equal within ``tol`` per coordinate, summing their weights."""
        points, weights = consolidate_atoms(self.points, self.weights, tol)
        return DiscreteMeasure(points, weights)

    def to_dict(self) -> Dict:
        return {
            'points': self.points.tolist(),
            'weights': self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'DiscreteMeasure':
        try:
            return cls(data['points'], data['weights'])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f'Malformed measure document: {exc}') from exc

    @classmethod
    def dirac(cls, point) -> 'DiscreteMeasure':
        return cls([np.atleast_1d(np.asarray(point, dtype=np.float64))], [1.0])


@dataclass(frozen=True)
class MeasureReport:
    """Outcome of validate(): ok, or the first violated invariant."""

    ok: bool
    violation: Optional[str] = None


def validate(measure: DiscreteMeasure) -> MeasureReport:
    """
    Check the DiscreteMeasure invariants in a fixed order.

    Never raises: anything that is not a well-formed measure is reported as
    a violation.

    Args:
        measure: Measure to check

    Returns:
        MeasureReport with ok=True, or ok=False and the first violation
    """
    try:
        points = np.asarray(measure.points, dtype=np.float64)
        weights = np.asarray(measure.weights, dtype=np.float64)
    except (AttributeError, TypeError, ValueError) as exc:
        return MeasureReport(False, f'not a measure: {exc}')

    if points.ndim != 2 or weights.ndim != 1:
        return MeasureReport(False, 'points must be (n, d) and weights (n,)')
    if points.shape[0] < 1:
        return MeasureReport(False, 'measure has no atoms (n >= 1 required)')
    if points.shape[0] != weights.shape[0]:
        return MeasureReport(
            False, f'{points.shape[0]} points but {weights.shape[0]} weights'
        )
    if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
        return MeasureReport(False, 'NaN or Inf in points or weights')
    if np.any(weights < 0):
        return MeasureReport(False, 'negative weight')
    total = float(np.sum(weights))
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        return MeasureReport(False, f'weights sum to {total!r}, not 1 within {WEIGHT_SUM_TOL}')
    if np.any(np.abs(points) > 1.0):
        worst = float(np.max(np.abs(points)))
        return MeasureReport(False, f'point coordinate {worst!r} out of domain [-1, 1]')
    return MeasureReport(True)


def consolidate_atoms(points: np.ndarray, weights: np.ndarray, tol: Optional[float] = None):
    """
    Merge atoms whose coordinates agree within ``tol``.

    Atoms are sorted lexicographically (first coordinate slowest); a new group
    starts wherever consecutive sorted atoms differ by more than ``tol`` in
    some coordinate. Each group keeps its first atom as representative.

    Returns:
        (points, weights) of the merged measure, sorted lexicographically
    """
    if tol is None:
        tol = get_consolidate_tol()
    points = _as_points(points)
    weights = np.asarray(weights, dtype=np.float64)
    if points.shape[0] <= 1:
        return points.copy(), weights.copy()

    keys = np.round(points / tol) if tol > 0 else points
    # lexsort treats its last key as primary
    order = np.lexsort(tuple(points[:, k] for k in reversed(range(points.shape[1])))
                       + tuple(keys[:, k] for k in reversed(range(points.shape[1]))))
    sorted_points = points[order]
    gaps = np.any(np.abs(np.diff(sorted_points, axis=0)) > tol, axis=1)
    starts = np.concatenate(([0], np.flatnonzero(gaps) + 1))
    return sorted_points[starts], np.add.reduceat(weights[order], starts)


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """
    A finitely supported population law.

    kind 'atoms' carries explicit points/probabilities; 'grid' is uniform on
    ``atoms_per_axis`` equispaced values per axis of [-1, 1]^d; 'two-point'
    is the product over d axes of the law taking ``high`` with probability
    ``p`` and ``low`` otherwise.
    """

    kind: str
    dimension: int
    points: Optional[np.ndarray] = None
    probabilities: Optional[np.ndarray] = None
    atoms_per_axis: Optional[int] = None
    low: float = -1.0
    high: float = 1.0
    p: float = 0.5

    @classmethod
    def atoms(cls, points, probabilities) -> 'PopulationSpec':
        pts = _as_points(points)
        spec = cls('atoms', pts.shape[1], pts, np.asarray(probabilities, dtype=np.float64))
        spec.check()
        return spec

    @classmethod
    def grid(cls, dimension: int, atoms_per_axis: int) -> 'PopulationSpec':
        spec = cls('grid', int(dimension), atoms_per_axis=int(atoms_per_axis))
        spec.check()
        return spec

    @classmethod
    def two_point(cls, dimension: int, low: float = -1.0, high: float = 1.0, p: float = 0.5) -> 'PopulationSpec':
        spec = cls('two-point', int(dimension), low=float(low), high=float(high), p=float(p))
        spec.check()
        return spec

    def check(self) -> None:
        """Raise ValidationError if the spec is not a valid finite population."""
        if self.kind not in ('atoms', 'grid', 'two-point'):
            raise ValidationError(f'Unknown population kind "{self.kind}"')
        if self.dimension < 1:
            raise ValidationError('Population dimension must be >= 1')
        if self.kind == 'grid' and (self.atoms_per_axis is None or self.atoms_per_axis < 1):
            raise ValidationError('Grid populations need atoms_per_axis >= 1')
        if self.kind == 'two-point':
            if not 0.0 <= self.p <= 1.0:
                raise ValidationError(f'Two-point probability {self.p} outside [0, 1]')
            if max(abs(self.low), abs(self.high)) > 1.0:
                raise ValidationError('Two-point values must lie in [-1, 1]')
        report = validate(self.to_measure())
        if not report.ok:
            raise ValidationError(f'Invalid population: {report.violation}')
        if self.to_measure().dimension != self.dimension:
            raise ValidationError('Population points do not match its dimension')

    def to_measure(self) -> DiscreteMeasure:
        """The population itself as a DiscreteMeasure, atoms in sampling order."""
        if self.kind == 'atoms':
            return DiscreteMeasure(self.points, self.probabilities)
        if self.kind == 'grid':
            k = self.atoms_per_axis
            axis = np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)
            mesh = np.meshgrid(*([axis] * self.dimension), indexing='ij')
            points = np.stack([g.reshape(-1) for g in mesh], axis=1)
            return DiscreteMeasure(points, np.full(points.shape[0], 1.0 / points.shape[0]))
        # two-point: low before high on every axis, last axis fastest
        bits = np.array(np.meshgrid(*([[0, 1]] * self.dimension), indexing='ij')).reshape(self.dimension, -1).T
        points = np.where(bits == 1, self.high, self.low)
        probs = np.prod(np.where(bits == 1, self.p, 1.0 - self.p), axis=1)
        return DiscreteMeasure(points, probs / probs.sum())

    def perturbed(self, delta: float) -> 'PopulationSpec':
        """
        Shift atom a by delta * (-1)^a / sqrt(d) along every axis.

        Raises:
            ValidationError: if a shifted atom leaves [-1, 1]^d
        """
        base = self.to_measure()
        signs = np.where(np.arange(base.size) % 2 == 0, 1.0, -1.0)
        shifted = base.points + (delta / np.sqrt(base.dimension)) * signs[:, None]
        if np.any(np.abs(shifted) > 1.0):
            raise ValidationError(f'Perturbation delta={delta} moves atoms outside [-1, 1]^d')
        return PopulationSpec('atoms', base.dimension, shifted, base.weights.copy())

    def to_dict(self) -> Dict:
        if self.kind == 'atoms':
            return {
                'kind': 'atoms',
                'points': _as_points(self.points).tolist(),
                'weights': np.asarray(self.probabilities, dtype=np.float64).tolist(),
            }
        if self.kind == 'grid':
            return {'kind': 'grid', 'dimension': self.dimension, 'atoms_per_axis': self.atoms_per_axis}
        return {'kind': 'two-point', 'dimension': self.dimension,
                'low': self.low, 'high': self.high, 'p': self.p}

    @classmethod
    def from_dict(cls, data: Dict) -> 'PopulationSpec':
        if not isinstance(data, dict):
            raise ValidationError('Population must be a JSON object')
        kind = data.get('kind', 'atoms')
        try:
            if kind == 'atoms':
                return cls.atoms(data['points'], data['weights'])
            if kind == 'grid':
                return cls.grid(data['dimension'], data['atoms_per_axis'])
            if kind == 'two-point':
                return cls.two_point(data['dimension'], data.get('low', -1.0),
                                     data.get('high', 1.0), data.get('p', 0.5))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f'Malformed population "{kind}": {exc}') from exc
        raise ValidationError(f'Unknown population kind "{kind}"')


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValidationError(f'Seed {seed} is not an unsigned 64-bit integer')
    return seed


def make_rng(seed: int) -> np.random.Generator:
    """Philox4x64 generator keyed by SeedSequence(seed)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_seed(seed))))


def derive_seed(seed: int, *key: int) -> int:
    """
    Derive an independent 64-bit stream seed from a parent seed and an integer key.

    The derivation is SeedSequence(seed, spawn_key=key).generate_state(1, uint64).
    """
    sequence = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def sample_indices(pop: PopulationSpec, N: int, seed: int) -> np.ndarray:
    """Population atom index of each of the N draws, in draw order."""
    if int(N) < 1:
        raise ValidationError(f'Sample size N={N} must be >= 1')
    pop.check()
    probs = pop.to_measure().weights
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    u = make_rng(seed).random(int(N))
    return np.searchsorted(cdf, u, side='right')


def sample_atom_counts(pop: PopulationSpec, N: int, seed: int) -> np.ndarray:
    """Number of draws that landed on each population atom."""
    atoms = pop.to_measure().size
    return np.bincount(sample_indices(pop, N, seed), minlength=atoms)


def sample_empirical(pop: PopulationSpec, N: int, seed: int, consolidate: bool = True) -> DiscreteMeasure:
    """
    Draw N i.i.d. points from a population and return their empirical measure.

    Args:
        pop: Finite population law
        N: Number of draws
        seed: Unsigned 64-bit seed; identical seeds give identical output
        consolidate: Merge repeated draws into one atom with summed weight
            (atoms then appear in population order); otherwise keep every draw
            with weight 1/N in draw order

    Returns:
        DiscreteMeasure with total weight 1
    """
    population = pop.to_measure()
    if consolidate:
        counts = sample_atom_counts(pop, N, seed)
        hit = np.flatnonzero(counts)
        return DiscreteMeasure(population.points[hit], counts[hit] / float(N))
    draws = sample_indices(pop, N, seed)
    return DiscreteMeasure(population.points[draws], np.full(int(N), 1.0 / float(N)))


@dataclass(frozen=True, eq=False)
class Problem:
    """m marginals, barycentric weights alpha and regularization epsilon."""

    marginals: Tuple[DiscreteMeasure, ...]
    alpha: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, 'marginals', tuple(self.marginals))
        object.__setattr__(self, 'alpha', _frozen(np.asarray(self.alpha, dtype=np.float64).reshape(-1)))
        object.__setattr__(self, 'epsilon', float(self.epsilon))
        self._check()

    def _check(self):
        if len(self.marginals) < 1:
            raise ValidationError('A problem needs at least one marginal (m >= 1)')
        if self.alpha.shape[0] != len(self.marginals):
            raise ValidationError(
                f'alpha has {self.alpha.shape[0]} entries for {len(self.marginals)} marginals'
            )
        if not np.all(np.isfinite(self.alpha)) or np.any(self.alpha < 0):
            raise ValidationError('alpha entries must be finite and nonnegative')
        if abs(float(np.sum(self.alpha)) - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f'alpha sums to {float(np.sum(self.alpha))!r}, not 1')
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValidationError(f'epsilon must be > 0, got {self.epsilon}')
        dims = {mu.dimension for mu in self.marginals}
        if len(dims) != 1:
            raise ValidationError(f'Marginals have mixed dimensions {sorted(dims)}')
        for j, mu in enumerate(self.marginals):
            report = validate(mu)
            if not report.ok:
                raise ValidationError(f'Marginal {j + 1}: {report.violation}')

    @property
    def m(self) -> int:
        return len(self.marginals)

    @property
    def dimension(self) -> int:
        return self.marginals[0].dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(mu.size for mu in self.marginals)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def with_epsilon(self, epsilon: float) -> 'Problem':
        return Problem(self.marginals, self.alpha, epsilon)

    def stripped(self) -> Tuple['Problem', List[np.ndarray]]:
        """
        The same problem without zero-weight atoms.

        Returns:
            (problem on positive-weight atoms, per-marginal original indices)
        """
        pairs = [mu.support() for mu in self.marginals]
        if all(keep.size == mu.size for (_, keep), mu in zip(pairs, self.marginals)):
            return self, [keep for _, keep in pairs]
        return Problem([mu for mu, _ in pairs], self.alpha, self.epsilon), [keep for _, keep in pairs]

    def to_dict(self) -> Dict:
        return {
            'marginals': [mu.to_dict() for mu in self.marginals],
            'alpha': self.alpha.tolist(),
            'epsilon': self.epsilon,
        }

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form; identifies a problem in provenance records."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()