from .blocks import block_approximation, block_counts, block_kl_bound, kl_divergence
from .simplex import SimplexResult, solve_standard_form
from .transport import (
    LPSolveReport,
    exact_mot,
    lp_wasserstein_power,
    quantile_wasserstein_power,
    wasserstein_p,
    wasserstein_p_power,
)

__all__ = [
    'LPSolveReport',
    'SimplexResult',
    'block_approximation',
    'block_counts',
    'block_kl_bound',
    'exact_mot',
    'kl_divergence',
    'lp_wasserstein_power',
    'quantile_wasserstein_power',
    'solve_standard_form',
    'wasserstein_p',
    'wasserstein_p_power',
]
