"""
Experiment configuration: the JSON document, its validation form and the
immutable ExperimentConfig the runners consume.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from django import forms
from django.core.exceptions import ValidationError

from ..measures import SEED_LIMIT, WEIGHT_SUM_TOL, PopulationSpec, Problem
from ..observables import TestFunction, build_test_function, check_dimension
from ..utils import get_default_tol, get_default_threads, get_max_sweeps


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A validated experiment configuration; mirrors the JSON document field for field."""

    populations: Tuple[PopulationSpec, ...]
    alpha: Tuple[float, ...]
    epsilon: float
    n_grid: Tuple[int, ...] = ()
    reps: int = 1
    seed: int = 0
    test_function: TestFunction = field(default_factory=lambda: TestFunction('monomial', {'degree': 1}))
    output: str = ''
    tol: float = 1e-9
    max_sweeps: int = 10_000
    p: int = 1
    epsilon_grid: Tuple[float, ...] = ()
    deltas: Tuple[float, ...] = ()
    L: float = 1.0
    trials: int = 200
    threads: int = 1

    @property
    def m(self) -> int:
        return len(self.populations)

    @property
    def dimension(self) -> int:
        return self.populations[0].dimension

    def population_problem(self, epsilon: Optional[float] = None) -> Problem:
        """The problem on the exact population atoms and probabilities."""
        return Problem(
            [pop.to_measure() for pop in self.populations],
            np.asarray(self.alpha),
            self.epsilon if epsilon is None else epsilon,
        )

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """Copy with the given fields replaced; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        return parse_config({**self.to_dict(), **changes})

    def to_dict(self) -> Dict:
        return {
            'populations': [pop.to_dict() for pop in self.populations],
            'alpha': list(self.alpha),
            'epsilon': self.epsilon,
            'n_grid': list(self.n_grid),
            'reps': self.reps,
            'seed': self.seed,
            'test_function': self.test_function.to_dict(),
            'output': self.output,
            'tol': self.tol,
            'max_sweeps': self.max_sweeps,
            'p': self.p,
            'epsilon_grid': list(self.epsilon_grid),
            'deltas': list(self.deltas),
            'L': self.L,
            'trials': self.trials,
            'threads': self.threads,
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()


class ExperimentConfigForm(forms.Form):
    """Validates an experiment config document."""

    populations = forms.JSONField()
    alpha = forms.JSONField()
    epsilon = forms.FloatField()
    n_grid = forms.JSONField(required=False)
    reps = forms.IntegerField(required=False)
    seed = forms.IntegerField(required=False)
    test_function = forms.JSONField(required=False)
    output = forms.CharField(required=False)
    tol = forms.FloatField(required=False)
    max_sweeps = forms.IntegerField(required=False)
    p = forms.IntegerField(required=False)
    epsilon_grid = forms.JSONField(required=False)
    deltas = forms.JSONField(required=False)
    L = forms.FloatField(required=False)
    trials = forms.IntegerField(required=False)
    threads = forms.IntegerField(required=False)

    def clean_populations(self):
        data = self.cleaned_data['populations']
        if not isinstance(data, list) or not data:
            raise ValidationError('populations must be a non-empty list (m >= 1)')
        return tuple(PopulationSpec.from_dict(entry) for entry in data)

    def clean_alpha(self):
        data = self.cleaned_data['alpha']
        if not isinstance(data, list) or not all(isinstance(a, (int, float)) for a in data):
            raise ValidationError('alpha must be a list of numbers')
        return tuple(float(a) for a in data)

    def clean_epsilon(self):
        epsilon = self.cleaned_data['epsilon']
        if not epsilon > 0:
            raise ValidationError(f'epsilon must be > 0, got {epsilon}')
        return epsilon

    def clean_n_grid(self):
        data = self.cleaned_data.get('n_grid') or []
        if not isinstance(data, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in data):
            raise ValidationError('n_grid must be a list of integers')
        if any(n < 1 for n in data):
            raise ValidationError('n_grid entries must be >= 1')
        if any(b <= a for a, b in zip(data, data[1:])):
            raise ValidationError('n_grid must be strictly increasing')
        return tuple(data)

    def clean_reps(self):
        reps = self.cleaned_data.get('reps')
        if reps is None:
            return 1
        if reps < 1:
            raise ValidationError(f'reps must be >= 1, got {reps}')
        return reps

    def clean_seed(self):
        seed = self.cleaned_data.get('seed')
        if seed is None:
            return 0
        if not 0 <= seed < SEED_LIMIT:
            raise ValidationError(f'seed must be an unsigned 64-bit integer, got {seed}')
        return seed

    def clean_test_function(self):
        data = self.cleaned_data.get('test_function')
        if data in (None, {}):
            return TestFunction('monomial', {'degree': 1})
        return build_test_function(data)

    def clean_tol(self):
        tol = self.cleaned_data.get('tol')
        if tol is None:
            return get_default_tol()
        if not tol > 0:
            raise ValidationError(f'tol must be > 0, got {tol}')
        return tol

    def clean_max_sweeps(self):
        sweeps = self.cleaned_data.get('max_sweeps')
        if sweeps is None:
            return get_max_sweeps()
        if sweeps < 1:
            raise ValidationError(f'max_sweeps must be >= 1, got {sweeps}')
        return sweeps

    def clean_p(self):
        p = self.cleaned_data.get('p')
        if p is None:
            return 1
        if p not in (1, 2):
            raise ValidationError(f'p must be 1 or 2, got {p}')
        return p

    def _number_list(self, name):
        data = self.cleaned_data.get(name) or []
        if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
            raise ValidationError(f'{name} must be a list of numbers')
        return tuple(float(v) for v in data)

    def clean_epsilon_grid(self):
        grid = self._number_list('epsilon_grid')
        if any(e <= 0 for e in grid):
            raise ValidationError('epsilon_grid entries must be > 0')
        return grid

    def clean_deltas(self):
        deltas = self._number_list('deltas')
        if any(d < 0 for d in deltas):
            raise ValidationError('deltas must be >= 0')
        return deltas

    def clean_L(self):
        L = self.cleaned_data.get('L')
        if L is None:
            return 1.0
        if L < 0:
            raise ValidationError(f'L must be >= 0, got {L}')
        return L

    def clean_trials(self):
        trials = self.cleaned_data.get('trials')
        if trials is None:
            return 200
        if trials < 0:
            raise ValidationError(f'trials must be >= 0, got {trials}')
        return trials

    def clean_threads(self):
        threads = self.cleaned_data.get('threads')
        if threads is None:
            return get_default_threads()
        if threads < 1:
            raise ValidationError(f'threads must be >= 1, got {threads}')
        return threads

    def clean(self):
        cleaned_data = super().clean()
        populations = cleaned_data.get('populations')
        alpha = cleaned_data.get('alpha')
        if populations is None or alpha is None:
            return cleaned_data

        if len(alpha) != len(populations):
            raise ValidationError(f'alpha has {len(alpha)} entries for {len(populations)} populations')
        if any(a < 0 for a in alpha):
            raise ValidationError('alpha entries must be nonnegative')
        if abs(sum(alpha) - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f'alpha sums to {sum(alpha)!r}, not 1')
        dims = {pop.dimension for pop in populations}
        if len(dims) != 1:
            raise ValidationError(f'Populations have mixed dimensions {sorted(dims)}')
        h = cleaned_data.get('test_function')
        if h is not None:
            check_dimension(h, dims.pop())
        return cleaned_data

    def to_config(self) -> ExperimentConfig:
        data = self.cleaned_data
        return ExperimentConfig(
            populations=data['populations'],
            alpha=data['alpha'],
            epsilon=data['epsilon'],
            n_grid=data['n_grid'],
            reps=data['reps'],
            seed=data['seed'],
            test_function=data['test_function'],
            output=data.get('output') or '',
            tol=data['tol'],
            max_sweeps=data['max_sweeps'],
            p=data['p'],
            epsilon_grid=data['epsilon_grid'],
            deltas=data['deltas'],
            L=data['L'],
            trials=data['trials'],
            threads=data['threads'],
        )


def _form_message(form: ExperimentConfigForm) -> str:
    parts = []
    for name, errors in form.errors.items():
        label = 'config' if name == '__all__' else name
        parts.extend(f'{label}: {message}' for message in errors)
    return '; '.join(parts)


def parse_config(document: Dict) -> ExperimentConfig:
    """
    Validate a config document.

    Raises:
        ValidationError: naming each violated field
    """
    if not isinstance(document, dict):
        raise ValidationError('Config must be a JSON object')
    form = ExperimentConfigForm(data=document)
    if not form.is_valid():
        raise ValidationError(_form_message(form))
    return form.to_config()


def load_config(path) -> ExperimentConfig:
    """
    Read and validate a JSON config file.

    Raises:
        ValidationError: if the file is missing, unreadable, not JSON or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f'Config file not found: {path}')
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f'Cannot read config {path}: {exc}') from exc
    return parse_config(document)
