from .diagnostics import (
    ProbeReport,
    concavity_probe,
    finite_difference_check,
    strong_concavity_constant,
)
from .dual import (
    coupling_density,
    coupling_weights,
    dual_objective,
    gibbs_divergence,
    gradient,
    gradient_norm,
    inner_product,
    log_partition,
    potential_norm,
    primal_terms,
    primal_value,
    shift_potentials,
    solved_problem,
)
from .kernel import LogKernel
from .sinkhorn import sinkhorn_solve
from .solution import PotentialVector, Solution

__all__ = [
    'LogKernel',
    'PotentialVector',
    'ProbeReport',
    'Solution',
    'concavity_probe',
    'coupling_density',
    'coupling_weights',
    'dual_objective',
    'finite_difference_check',
    'gibbs_divergence',
    'gradient',
    'gradient_norm',
    'inner_product',
    'log_partition',
    'potential_norm',
    'primal_terms',
    'primal_value',
    'shift_potentials',
    'sinkhorn_solve',
    'solved_problem',
    'strong_concavity_constant',
]
