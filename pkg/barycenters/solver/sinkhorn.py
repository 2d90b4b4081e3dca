"""
Multimarginal Sinkhorn: cyclic block coordinate ascent on the entropic dual.

One sweep visits j = 1, ..., m and solves the j-th block of the Schrodinger
system exactly,

    f_j <- f_j - eps * (log marginal_j(pi) - log w_j),

which is f_j = -eps log integral of exp((sum_{i != j} f_i - c_alpha) / eps)
over the other marginals. After each sweep f_1..f_{m-1} are re-centered to
nu_k(f_k) = 0 and the shifts are absorbed by f_m.
"""

import logging
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError
from scipy.special import logsumexp

from ..utils import get_default_tol, get_max_sweeps
from .dual import marginal_residuals
from .kernel import LogKernel, pairwise_sum
from .solution import PotentialVector, Solution

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-12


def _initial_values(init, solved, supports, original_shape):
    if init is None:
        return [np.zeros(n) for n in solved.shape]
    if not isinstance(init, PotentialVector):
        init = PotentialVector(tuple(init))
    if init.shape == solved.shape:
        values = [v.copy() for v in init.values]
    elif init.shape == tuple(original_shape):
        values = [v.copy() for v in init.restricted(supports).values]
    else:
        raise ValidationError(
            f'Initial potentials have shape {init.shape}, problem has {tuple(original_shape)}'
        )
    if not all(np.all(np.isfinite(v)) for v in values):
        raise ValidationError('Initial potentials must be finite')
    return values


def sinkhorn_solve(prob, tol: Optional[float] = None, max_sweeps: Optional[int] = None,
                   init=None, slab_rows: Optional[int] = None) -> Solution:
    """
    Solve the entropic multimarginal problem by cyclic Sinkhorn sweeps.

    Args:
        prob: Problem to solve; zero-weight atoms are dropped first
        tol: stop once the sup-norm marginal residual is <= tol
            (default MSB_DEFAULT_TOL)
        max_sweeps: sweep limit (default MSB_MAX_SWEEPS)
        init: warm start on the original or the stripped atoms; zeros if None
        slab_rows: lazy-mode chunk size (default MSB_SLAB_ROWS)

    Returns:
        Solution; converged is False when the sweep limit was reached
    """
    tol = get_default_tol() if tol is None else float(tol)
    max_sweeps = get_max_sweeps() if max_sweeps is None else int(max_sweeps)
    if not tol > 0:
        raise ValidationError(f'tol must be > 0, got {tol}')
    if max_sweeps < 1:
        raise ValidationError(f'max_sweeps must be >= 1, got {max_sweeps}')

    solved, supports = prob.stripped()
    values = _initial_values(init, solved, supports, prob.shape)
    kernel = LogKernel(solved, slab_rows=slab_rows)
    eps = solved.epsilon
    weights = [mu.weights for mu in solved.marginals]

    def linear(vals):
        return pairwise_sum([float(np.dot(w, v)) for w, v in zip(weights, vals)])

    def measured(vals, log_marginal):
        return linear(vals) - eps * float(np.exp(logsumexp(log_marginal)))

    dual = linear(values) - eps * float(np.exp(kernel.log_mass(values)))
    trace = []
    monotone = True
    converged = False
    residual = np.inf
    log_marginals = None
    sweeps = 0

    def ascent(current, previous, where):
        if current < previous - MONOTONE_SLACK * max(1.0, abs(previous)):
            logger.warning(f'Dual decreased from {previous!r} to {current!r} {where}')
            return False
        return True

    for sweeps in range(1, max_sweeps + 1):
        for j in range(solved.m):
            lm = kernel.log_marginal(values, j)
            # Phi at the current iterate, from the mass of its coupling
            current = measured(values, lm)
            monotone &= ascent(current, dual, f'before sweep {sweeps}, block {j + 1}')
            dual = current
            values[j] = values[j] - eps * (lm - kernel.log_weights[j])

        values = [v.copy() for v in PotentialVector(tuple(values)).normalized(weights).values]

        log_marginals = kernel.log_marginals(values)
        current = measured(values, log_marginals[0])
        monotone &= ascent(current, dual, f'after sweep {sweeps}')
        dual = current
        residual = max(float(np.max(np.abs(r))) for r in marginal_residuals(log_marginals, kernel.log_weights))
        trace.append((dual, residual))
        if residual <= tol:
            converged = True
            break

    potentials = PotentialVector(tuple(values))
    mass = float(np.exp(kernel.log_mass(values)))
    dual_value = linear(values) - eps * mass
    residuals = marginal_residuals(log_marginals, kernel.log_weights)
    grad_norm = float(np.sqrt(max(pairwise_sum(
        [float(np.dot(w, r * r)) for w, r in zip(weights, residuals)]), 0.0)))
    transport, kl, _ = kernel.sums(values)
    primal = transport + eps * kl

    if converged:
        logger.debug(f'Converged in {sweeps} sweeps: residual {residual:.3e}, dual {dual_value!r}')
    else:
        logger.warning(f'No convergence after {sweeps} sweeps: residual {residual:.3e} > tol {tol:.3e}')

    return Solution(
        potentials=potentials,
        dual_value=dual_value,
        primal_value=primal,
        marginal_residual=residual,
        gradient_norm=grad_norm,
        iterations=sweeps,
        converged=converged,
        epsilon=eps,
        trace=trace,
        supports=supports,
        original_shape=prob.shape,
        problem_hash=prob.fingerprint(),
        monotone=monotone,
    )
