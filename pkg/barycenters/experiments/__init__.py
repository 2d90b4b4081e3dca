from .config import ExperimentConfig, load_config, parse_config
from .fitting import SlopeFit, fit_loglog_slope
from .runners import (
    PopulationReference,
    barycenter_rate_experiment,
    cost_rate_experiment,
    gamma_experiment,
    gradient_concentration_experiment,
    population_reference,
    stability_experiment,
    test_function_concentration,
)

__all__ = [
    'ExperimentConfig',
    'PopulationReference',
    'SlopeFit',
    'barycenter_rate_experiment',
    'cost_rate_experiment',
    'fit_loglog_slope',
    'gamma_experiment',
    'gradient_concentration_experiment',
    'load_config',
    'parse_config',
    'population_reference',
    'stability_experiment',
    'test_function_concentration',
]
