"""
The entropic multimarginal dual

    Phi(f) = sum_j nu_j(f_j) - eps * integral of exp((sum_j f_j - c_alpha) / eps) d(nu_1 x ... x nu_m)

its gradient in L2(nu_1) x ... x L2(nu_m), the coupling it induces and the
primal value of that coupling.

Functions take either a PotentialVector or a plain sequence of arrays. When a
Solution was computed on a problem with zero-weight atoms, pass the original
problem: the matching stripped problem is recovered here.
"""

import dataclasses
from typing import Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from ..exceptions import CapacityError
from ..utils import get_enumeration_cap
from .kernel import LogKernel, pairwise_sum
from .solution import PotentialVector, Solution


def _values(f) -> Tuple[np.ndarray, ...]:
    if isinstance(f, Solution):
        f = f.potentials
    if isinstance(f, PotentialVector):
        return f.values
    return tuple(np.asarray(v, dtype=np.float64).reshape(-1) for v in f)


def solved_problem(sol: Solution, prob):
    """The problem whose atoms the solution's potentials live on."""
    if sol.potentials.shape == prob.shape:
        return prob
    stripped, _ = prob.stripped()
    if sol.potentials.shape != stripped.shape:
        raise ValidationError(
            f'Solution potentials have shape {sol.potentials.shape}, problem has {prob.shape}'
        )
    return stripped


def _kernel(prob, kernel: Optional[LogKernel], values) -> LogKernel:
    kernel = kernel or LogKernel(prob)
    kernel.check_shapes(values)
    return kernel


def _linear_term(values, prob) -> float:
    return pairwise_sum([float(np.dot(mu.weights, f)) for mu, f in zip(prob.marginals, values)])


def marginal_residuals(log_marginals, log_weights) -> Tuple[np.ndarray, ...]:
    """1 - exp(lm_j - log w_j) per atom, 0 where w_j = 0."""
    out = []
    for lm, lw in zip(log_marginals, log_weights):
        ratio = np.zeros_like(lw)
        positive = np.isfinite(lw)
        ratio[positive] = np.exp(lm[positive] - lw[positive])
        residual = 1.0 - ratio
        residual[~positive] = 0.0
        out.append(residual)
    return tuple(out)


def dual_objective(f, prob, kernel: LogKernel = None) -> float:
    """
    Phi(f), with the integral evaluated as exp of a stabilized log-sum-exp.

    Summation runs over marginal-1 slabs (marginal 1 slowest) merged pairwise.
    """
    values = _values(f)
    kernel = _kernel(prob, kernel, values)
    return _linear_term(values, prob) - prob.epsilon * float(np.exp(kernel.log_mass(values)))


def gradient(f, prob, kernel: LogKernel = None) -> PotentialVector:
    """
    g_j(x_j) = 1 - integral of p d(product of nu_k, k != j), one array per marginal.

    Zero on zero-weight atoms; all zero exactly when every marginal constraint holds.
    """
    values = _values(f)
    kernel = _kernel(prob, kernel, values)
    return PotentialVector(marginal_residuals(kernel.log_marginals(values), kernel.log_weights))


def inner_product(g, h, prob) -> float:
    """<g, h> = sum_j nu_j(g_j h_j)."""
    g, h = _values(g), _values(h)
    return pairwise_sum([float(np.dot(mu.weights, a * b)) for mu, a, b in zip(prob.marginals, g, h)])


def potential_norm(h, prob) -> float:
    return float(np.sqrt(max(inner_product(h, h, prob), 0.0)))


def gradient_norm(f, prob, kernel: LogKernel = None) -> float:
    """||grad Phi(f)|| in L2(nu_1) x ... x L2(nu_m)."""
    return potential_norm(gradient(f, prob, kernel), prob)


def coupling_density(sol: Solution, prob, index: Optional[Sequence[int]] = None):
    """
    p = exp((sum_j f_j(x_j) - c_alpha) / eps), the density of the coupling
    with respect to the product of the marginals.

    Args:
        sol: Solution of ``prob``
        prob: The problem that was solved
        index: multi-index over the positive-weight atoms; None for the full tensor

    Raises:
        IndexError: if ``index`` is out of range
        CapacityError: if the full tensor is requested above the enumeration cap
    """
    solved = solved_problem(sol, prob)
    values = sol.potentials.values
    if index is not None:
        kernel = LogKernel(solved)
        cost = kernel.accessor.value(index)
        total = sum(float(values[j][i]) for j, i in enumerate(index))
        return float(np.exp((total - cost) / solved.epsilon))
    return np.exp(_log_tensor(solved, values, with_weights=False))


def coupling_weights(sol: Solution, prob) -> np.ndarray:
    """Coupling weights p * prod_j w_j over the full tensor of positive-weight atoms."""
    solved = solved_problem(sol, prob)
    return np.exp(_log_tensor(solved, sol.potentials.values, with_weights=True))


def _log_tensor(prob, values, with_weights: bool) -> np.ndarray:
    cap = get_enumeration_cap()
    if prob.size > cap:
        raise CapacityError('coupling enumeration', prob.size, cap)
    kernel = LogKernel(prob)
    out = np.empty(prob.shape)
    for start, stop, exponent in kernel.blocks(values):
        if not with_weights:
            exponent = exponent - kernel.broadcast_sum(kernel.log_weights, start, stop)
        out[start:stop] = exponent
    return out


def primal_terms(f, prob, kernel: LogKernel = None) -> Tuple[float, float, float]:
    """
    (transport cost sum pi c, KL(pi || product of nu_j), total mass) of the
    coupling induced by f.
    """
    values = _values(f)
    kernel = _kernel(prob, kernel, values)
    return kernel.sums(values)


def primal_value(sol: Solution, prob) -> float:
    """S = sum pi c + eps * KL(pi || product of nu_j), evaluated from the coupling weights."""
    solved = solved_problem(sol, prob)
    transport, kl, _ = primal_terms(sol.potentials, solved)
    return transport + solved.epsilon * kl


def log_partition(prob) -> float:
    """log Z with Z = integral of exp(-c_alpha / eps) d(nu_1 x ... x nu_m)."""
    kernel = LogKernel(prob)
    return kernel.log_mass([np.zeros(n) for n in prob.shape])


def gibbs_divergence(sol: Solution, prob) -> float:
    """
    eps * KL(pi || kappa) for the normalized Gibbs kernel
    kappa = exp(-c_alpha / eps) (nu_1 x ... x nu_m) / Z.

    log(pi / kappa) = sum_j f_j / eps + log Z, so this is
    sum pi (sum_j f_j) + eps * mass * log Z.
    """
    solved = solved_problem(sol, prob)
    kernel = LogKernel(solved)
    values = sol.potentials.values
    parts, masses = [], []
    for _, _, exponent, _, potentials in kernel.blocks(values, with_cost=True):
        weights = np.exp(exponent)
        parts.append(float(np.sum(weights * potentials)))
        masses.append(float(np.sum(weights)))
    return pairwise_sum(parts) + solved.epsilon * pairwise_sum(masses) * log_partition(solved)


def shift_potentials(sol: Solution, constants: Sequence[float]) -> Solution:
    """
    Add c_j to f_j. The coupling is unchanged when the constants sum to zero.

    Raises:
        ValidationError: on a wrong number of constants or a nonzero total
    """
    constants = [float(c) for c in constants]
    if len(constants) != sol.potentials.m:
        raise ValidationError(f'{len(constants)} constants for {sol.potentials.m} potentials')
    scale = max(1.0, max(abs(c) for c in constants))
    if abs(sum(constants)) > 1e-12 * scale:
        raise ValidationError(f'Translation constants sum to {sum(constants)!r}, not 0')
    return dataclasses.replace(sol, potentials=sol.potentials.shifted(constants))
