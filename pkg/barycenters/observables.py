"""
Built-in test functions h on [-1, 1]^d and coupling observables g on tuples.

A test function maps an (n, d) array of points to n values. A coupling
observable maps a (K, m, d) array of point tuples to K values. Configs name
test functions as {"family": ..., <parameters>}; the library also accepts
any callable with the same signature.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np
from django.core.exceptions import ValidationError

from .constants import TEST_FUNCTION_FAMILIES
from .cost import barycentric_images, cost_rows

FAMILY_NAMES = [name for name, _ in TEST_FUNCTION_FAMILIES]
MAX_MONOMIAL_DEGREE = 3


@dataclass(frozen=True)
class TestFunction:
    """One member of a built-in family, callable on an (n, d) array of points."""

    family: str
    params: Dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        p = self.params
        if self.family == 'constant':
            return np.full(points.shape[0], float(p.get('value', 1.0)))
        if self.family == 'monomial':
            return points[:, p.get('coordinate', 0)] ** int(p.get('degree', 1))
        if self.family == 'cosine':
            k = np.broadcast_to(np.asarray(p.get('k', 1.0), dtype=np.float64), (points.shape[1],))
            return np.cos(points @ k + float(p.get('b', 0.0)))
        if self.family == 'ramp':
            x = points[:, p.get('coordinate', 0)]
            return np.clip(float(p.get('slope', 1.0)) * (x - float(p.get('offset', 0.0))), -1.0, 1.0)
        raise ValidationError(f'"{self.family}" is not a test function on points')

    @property
    def is_coupling_observable(self) -> bool:
        return self.family == 'cost'

    def sup_norm(self, dimension: int) -> float:
        """An upper bound on ||h||_inf over [-1, 1]^d."""
        if self.family == 'constant':
            return abs(float(self.params.get('value', 1.0)))
        return 1.0

    def to_dict(self) -> Dict:
        return {'family': self.family, **self.params}


def build_test_function(spec) -> TestFunction:
    """
    Build a TestFunction from a config entry such as {"family": "monomial", "degree": 2}.

    Raises:
        ValidationError: on an unknown family or out-of-range parameters
    """
    if isinstance(spec, str):
        spec = {'family': spec}
    if not isinstance(spec, dict) or 'family' not in spec:
        raise ValidationError('A test function needs a "family" entry')
    family = spec['family']
    if family not in FAMILY_NAMES:
        raise ValidationError(f'Unknown test function family "{family}"; choose from {FAMILY_NAMES}')
    params = {k: v for k, v in spec.items() if k != 'family'}
    if family == 'monomial':
        degree = params.get('degree', 1)
        if not isinstance(degree, int) or not 0 <= degree <= MAX_MONOMIAL_DEGREE:
            raise ValidationError(f'Monomial degree must be an integer in [0, {MAX_MONOMIAL_DEGREE}]')
    if family in ('monomial', 'ramp'):
        coordinate = params.get('coordinate', 0)
        if not isinstance(coordinate, int) or coordinate < 0:
            raise ValidationError('coordinate must be a nonnegative integer')
    if family == 'ramp' and float(params.get('slope', 1.0)) < 0:
        raise ValidationError('Ramp slope must be >= 0')
    return TestFunction(family, params)


def check_dimension(h: TestFunction, dimension: int) -> None:
    coordinate = h.params.get('coordinate')
    if coordinate is not None and coordinate >= dimension:
        raise ValidationError(f'Test function coordinate {coordinate} out of range for d={dimension}')
    k = h.params.get('k')
    if isinstance(k, list) and len(k) != dimension:
        raise ValidationError(f'Cosine wave vector has {len(k)} entries for d={dimension}')


def coupling_observable(h, alpha) -> Callable[[np.ndarray], np.ndarray]:
    """
    The coupling counterpart of h: c_alpha itself for the 'cost' family,
    otherwise h composed with the barycentric map.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if isinstance(h, TestFunction) and h.is_coupling_observable:
        return lambda tuples: cost_rows(tuples, alpha)
    return lambda tuples: h(barycentric_images(tuples, alpha))
