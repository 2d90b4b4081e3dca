"""
Numerical checks of the curvature of the dual: strong concavity on the
sum-bounded set S_L, the Polyak-Lojasiewicz bound it implies, and central
finite differences against the analytic gradient.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from django.core.exceptions import ValidationError

from ..cost import cost_sup_bound
from ..measures import make_rng
from .dual import dual_objective, gradient, inner_product, potential_norm
from .kernel import LogKernel
from .sinkhorn import sinkhorn_solve
from .solution import PotentialVector, Solution

logger = logging.getLogger(__name__)

PROBE_SLACK = 1e-12
PL_SLACK = 1e-9


def strong_concavity_constant(epsilon: float, L: float, cost_bound: float) -> float:
    """beta = exp(-(L + ||c||_inf) / eps) / eps."""
    if epsilon <= 0:
        raise ValidationError(f'epsilon must be > 0, got {epsilon}')
    if L < 0:
        raise ValidationError(f'L must be >= 0, got {L}')
    return float(np.exp(-(L + cost_bound) / epsilon) / epsilon)


def sum_sup_norm(values) -> float:
    """||f_1 + ... + f_m||_inf over the product of the supports."""
    if isinstance(values, PotentialVector):
        values = values.values
    high = sum(float(np.max(v)) for v in values)
    low = sum(float(np.min(v)) for v in values)
    return max(abs(high), abs(low))


def sample_sum_bounded(prob, L: float, rng: np.random.Generator) -> PotentialVector:
    """
    A random normalized potential vector with ||sum_j f_j||_inf <= L.

    Values are uniform on [-1, 1], f_1..f_{m-1} are centered, and the whole
    vector is rescaled so the sup norm of the sum is L times a uniform draw.
    """
    weights = [mu.weights for mu in prob.marginals]
    raw = PotentialVector(tuple(rng.uniform(-1.0, 1.0, n) for n in prob.shape)).normalized(weights)
    norm = sum_sup_norm(raw)
    if norm == 0.0:
        return raw
    scale = L * rng.random() / norm
    return PotentialVector(tuple(scale * v for v in raw.values))


@dataclass
class ProbeReport:
    """
    Outcome of concavity_probe; ``violations`` should be empty.

    ``beta`` is the strong-concavity constant at ``L``. The PL bound uses
    ``beta_at_L_effective``, the same formula at L_effective = max(L, ||sum_j f*_j||_inf),
    so that the optimum lies in the sum-bounded set; it equals ``beta`` when
    f* already lies in S_L.
    """

    beta: float
    beta_at_L_effective: float
    L: float
    L_effective: float
    trials: int
    optimum_dual: float
    min_concavity_margin: float
    min_pl_margin: float
    violations: List[Dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict:
        return {**asdict(self), 'ok': self.ok}


def concavity_probe(prob, L: float, trials: int, seed: int,
                    solution: Optional[Solution] = None) -> ProbeReport:
    """
    Check, on random pairs f, g in S_L,

        Phi(f) - Phi(g) >= <grad Phi(f), f - g> + (beta / 2) ||f - g||^2

    and Phi(f*) - Phi(f) <= ||grad Phi(f)||^2 / (2 beta'), where beta' uses
    L' = max(L, ||sum_j f*_j||_inf) so that f* lies in S_L'.

    Args:
        prob: Problem; zero-weight atoms are dropped
        L: bound on ||sum_j f_j||_inf
        trials: number of random pairs
        seed: seed for the pairs
        solution: converged solution of ``prob``; solved here if omitted

    Returns:
        ProbeReport listing every violating pair
    """
    if L < 0:
        raise ValidationError(f'L must be >= 0, got {L}')
    if int(trials) < 0:
        raise ValidationError(f'trials must be >= 0, got {trials}')
    solved, _ = prob.stripped()
    bound = cost_sup_bound(solved.alpha, solved.dimension, solved.m)
    beta = strong_concavity_constant(solved.epsilon, L, bound)

    if solution is None:
        solution = sinkhorn_solve(prob)
    optimum = solution.potentials
    L_effective = max(float(L), sum_sup_norm(optimum))
    beta_at_L_effective = strong_concavity_constant(solved.epsilon, L_effective, bound)

    kernel = LogKernel(solved)
    best = dual_objective(optimum, solved, kernel)
    rng = make_rng(seed)
    report = ProbeReport(beta, beta_at_L_effective, float(L), L_effective, int(trials), best, np.inf, np.inf)

    for trial in range(int(trials)):
        f = sample_sum_bounded(solved, L, rng)
        g = sample_sum_bounded(solved, L, rng)
        phi_f = dual_objective(f, solved, kernel)
        phi_g = dual_objective(g, solved, kernel)
        grad_f = gradient(f, solved, kernel)
        step = f.minus(g)

        lhs = phi_f - phi_g
        rhs = inner_product(grad_f, step, solved) + 0.5 * beta * potential_norm(step, solved) ** 2
        margin = lhs - rhs
        report.min_concavity_margin = min(report.min_concavity_margin, margin)
        if margin < -PROBE_SLACK * max(1.0, abs(phi_f), abs(phi_g)):
            report.violations.append({'trial': trial, 'kind': 'concavity', 'lhs': lhs, 'rhs': rhs})

        gap = best - phi_f
        pl_bound = potential_norm(grad_f, solved) ** 2 / (2.0 * beta_at_L_effective)
        report.min_pl_margin = min(report.min_pl_margin, pl_bound - gap)
        if gap > pl_bound + PL_SLACK * max(1.0, abs(best)):
            report.violations.append({'trial': trial, 'kind': 'pl', 'lhs': gap, 'rhs': pl_bound})

    if report.violations:
        logger.warning(f'Concavity probe found {len(report.violations)} violations in {trials} trials')
    return report


def finite_difference_check(prob, f, directions: int, seed: int, delta: float = 1e-5) -> List[Dict]:
    """
    Compare <grad Phi(f), h> with (Phi(f + delta h) - Phi(f - delta h)) / (2 delta)
    for random directions h with entries uniform on [-1, 1].

    Returns:
        One {'analytic', 'numeric', 'relative_error'} row per direction
    """
    if not isinstance(f, PotentialVector):
        f = PotentialVector(tuple(f))
    kernel = LogKernel(prob)
    kernel.check_shapes(f.values)
    grad = gradient(f, prob, kernel)
    rng = make_rng(seed)
    rows = []
    for _ in range(int(directions)):
        h = PotentialVector(tuple(rng.uniform(-1.0, 1.0, n) for n in prob.shape))
        analytic = inner_product(grad, h, prob)
        numeric = (dual_objective(f.plus(h, delta), prob, kernel)
                   - dual_objective(f.plus(h, -delta), prob, kernel)) / (2.0 * delta)
        scale = max(abs(analytic), abs(numeric), np.finfo(float).tiny)
        rows.append({
            'analytic': analytic,
            'numeric': numeric,
            'relative_error': abs(analytic - numeric) / scale,
        })
    return rows
