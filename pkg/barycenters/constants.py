"""
Shared constants for the barycenters app.
"""

# Population kinds accepted in configs
POPULATION_KINDS = [
    ('atoms', 'Finite atoms with probabilities'),
    ('grid', 'Uniform grid on [-1, 1]^d'),
    ('two-point', 'Product of two-point laws'),
]

# Subcommands of the msb command, in help order
SUBCOMMANDS = [
    ('solve', 'Solve the entropic multimarginal problem on the populations'),
    ('barycenter', 'Solve and push the coupling through the barycentric map'),
    ('exact', 'Unregularized multimarginal OT by linear programming'),
    ('rate-cost', 'Monte Carlo MSE rate of the empirical cost'),
    ('rate-bary', 'Monte Carlo W_p rate of the empirical barycenter'),
    ('rate-gradient', 'Concentration of the empirical dual gradient norm'),
    ('concentration', 'sqrt(N)-scaled test function deviations'),
    ('gamma', 'Convergence of the regularized problem as epsilon -> 0'),
    ('stability', 'Barycenter stability under marginal perturbations'),
    ('concavity', 'Strong concavity and PL checks of the dual on random potentials'),
    ('validate', 'Validate a config and its populations'),
]

# Built-in test function families
TEST_FUNCTION_FAMILIES = [
    ('constant', 'h(x) = value'),
    ('monomial', 'h(x) = x[coordinate] ** degree, degree <= 3'),
    ('cosine', 'h(x) = cos(k . x + b)'),
    ('ramp', 'h(x) = clip(slope * (x[coordinate] - offset), -1, 1)'),
    ('cost', 'coupling observable g = c_alpha'),
]

# Exit codes of the msb command
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NON_CONVERGENCE = 3
EXIT_CAPACITY = 4

# Share of excluded (non-converged) solves above which a rate run fails
MAX_EXCLUDED_FRACTION = 0.01

# Boundedness threshold on the max/min ratio of scaled 90% quantiles
QUANTILE_RATIO_BOUND = 3.0

# Significant digits for every float written to CSV
CSV_FLOAT_FORMAT = '.17g'
