"""
Log-log slope fits of Monte Carlo statistics against the sample size.
"""

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from scipy import stats

MIN_POINTS = 3


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n_points: int
    defined: bool = True

    @classmethod
    def undefined(cls, n_points: int) -> 'SlopeFit':
        return cls(float('nan'), float('nan'), float('nan'), n_points, defined=False)

    def to_dict(self) -> Dict:
        return {
            'slope': self.slope,
            'intercept': self.intercept,
            'r2': self.r2,
            'n_points': self.n_points,
            'defined': self.defined,
        }


def fit_loglog_slope(pairs: Sequence[Tuple[float, float]]) -> SlopeFit:
    """
    Ordinary least squares of log(statistic) on log(N).

    Args:
        pairs: (N, statistic) pairs

    Raises:
        ValidationError: with fewer than 3 pairs, or a nonpositive N or statistic
            (the message names the offending N)
    """
    pairs = [(float(n), float(y)) for n, y in pairs]
    if len(pairs) < MIN_POINTS:
        raise ValidationError(f'A slope fit needs at least {MIN_POINTS} points, got {len(pairs)}')
    for n, y in pairs:
        if not n > 0:
            raise ValidationError(f'Sample size N={n:g} must be positive')
        if not (y > 0 and np.isfinite(y)):
            raise ValidationError(f'Statistic at N={n:g} is {y!r}; a log-log fit needs positive values')

    x = np.log([n for n, _ in pairs])
    y = np.log([v for _, v in pairs])
    fit = stats.linregress(x, y)
    residuals = y - (fit.intercept + fit.slope * x)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residuals ** 2)) / total if total > 0 else 1.0
    return SlopeFit(float(fit.slope), float(fit.intercept), r2, len(pairs))
