"""
Monte Carlo harness for the statistical behaviour of the empirical problem.

Populations are finitely supported, so every population quantity (value,
potentials, barycenter) is computed exactly by the same solver and serves as
ground truth. Each (N, rep) task draws all m empirical marginals from its own
seed stream:

    rep seed      = derive_seed(master seed, N, rep)
    marginal seed = derive_seed(rep seed, j)          j = 0, ..., m - 1

Tasks run on a thread pool of ``config.threads`` workers and are gathered by
index, so results do not depend on the thread count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from ..barycenter import (
    BarycenterMeasure,
    compute_barycenter,
    coupling_expectation,
    integrate,
    pushforward_coupling,
)
from ..constants import MAX_EXCLUDED_FRACTION, QUANTILE_RATIO_BOUND
from ..exact import exact_mot, wasserstein_p, wasserstein_p_power
from ..exceptions import CapacityError, NonConvergenceError
from ..measures import DiscreteMeasure, Problem, derive_seed, sample_atom_counts
from ..observables import TestFunction, coupling_observable
from ..solver import Solution, gradient_norm, sinkhorn_solve
from ..utils import get_lp_cap
from .config import ExperimentConfig
from .fitting import SlopeFit, fit_loglog_slope

logger = logging.getLogger(__name__)

CHECK_SLACK = 1e-9


@dataclass(frozen=True)
class RepRecord:
    N: int
    rep: int
    statistic: float
    converged: bool
    seed: int


@dataclass(frozen=True)
class SummaryRow:
    N: int
    mean: float
    variance: float
    mse: float
    stderr: float
    n_reps: int
    n_excluded: int = 0


@dataclass
class RateResult:
    """
    Per-rep statistics, per-N summaries and the log-log fit of the ``fitted``
    summary column ('mse' or 'mean') against N.
    """

    label: str
    fitted: str
    reps: int
    records: List[RepRecord]
    summary: List[SummaryRow]
    fit: SlopeFit

    @property
    def excluded(self) -> List[RepRecord]:
        return [r for r in self.records if not r.converged]


@dataclass(frozen=True)
class QuantileRow:
    N: int
    q50: float
    q90: float
    observable: str


@dataclass
class ConcentrationResult:
    """sqrt(N)-scaled deviations for the barycenter observable h and its coupling counterpart."""

    barycenter: Optional[RateResult]
    coupling: RateResult
    quantiles: List[QuantileRow]
    ratios: Dict[str, float]

    @property
    def bounded(self) -> Dict[str, bool]:
        return {name: ratio <= QUANTILE_RATIO_BOUND for name, ratio in self.ratios.items()}


@dataclass(frozen=True)
class GammaRow:
    epsilon: float
    s_eps: float
    s_exact: float
    upper_bound: float
    w2_to_exact: float
    sweeps: int
    converged: bool


@dataclass
class GammaResult:
    rows: List[GammaRow]
    s_exact: float
    sandwich_holds: bool
    monotone: bool
    trend_ok: bool

    @property
    def all_converged(self) -> bool:
        return all(row.converged for row in self.rows)

    @property
    def failed_checks(self) -> List[str]:
        checks = (('sandwich', self.sandwich_holds), ('monotone', self.monotone), ('W2 trend', self.trend_ok))
        return [name for name, ok in checks if not ok]


@dataclass(frozen=True)
class StabilityRow:
    delta: float
    aggregate_w2: float
    w1_barycenter: float
    rhs: float
    c_fitted: float


@dataclass
class StabilityResult:
    rows: List[StabilityRow]
    c_fitted: float
    smallest_within_bound: bool
    trend_ok: bool
    converged: List[bool] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    @property
    def failed_checks(self) -> List[str]:
        checks = (('bound at smallest delta', self.smallest_within_bound), ('W1 trend', self.trend_ok))
        return [name for name, ok in checks if not ok]


@dataclass
class PopulationReference:
    """Ground truth computed on the population atoms."""

    problem: Problem
    solution: Solution
    barycenter: BarycenterMeasure

    @property
    def value(self) -> float:
        return self.solution.primal_value


def rep_seed(config: ExperimentConfig, N: int, rep: int) -> int:
    return derive_seed(config.seed, N, rep)


def draw_empirical(config: ExperimentConfig, N: int, seed: int) -> Tuple[Problem, List[np.ndarray]]:
    """
    The empirical problem of one rep.

    Returns:
        (problem on the consolidated empirical marginals, per marginal the
        population atom index of each empirical atom)
    """
    marginals, hits = [], []
    for j, pop in enumerate(config.populations):
        counts = sample_atom_counts(pop, N, derive_seed(seed, j))
        hit = np.flatnonzero(counts)
        atoms = pop.to_measure()
        marginals.append(DiscreteMeasure(atoms.points[hit], counts[hit] / float(N)))
        hits.append(hit)
    return Problem(marginals, np.asarray(config.alpha), config.epsilon), hits


def population_reference(config: ExperimentConfig) -> PopulationReference:
    """
    Solve on the exact populations.

    Raises:
        NonConvergenceError: if the population solve does not converge
    """
    problem = config.population_problem()
    solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
    if not solution.converged:
        raise NonConvergenceError(
            f'Population solve did not converge in {solution.iterations} sweeps '
            f'(residual {solution.marginal_residual:.3e} > tol {config.tol:.3e})'
        )
    barycenter = compute_barycenter(solution, problem)
    logger.debug(f'Population reference: S = {solution.primal_value!r}, {barycenter.size} barycenter atoms')
    return PopulationReference(problem, solution, barycenter)


def _require_grid(config: ExperimentConfig) -> None:
    if not config.n_grid:
        raise ValidationError('n_grid must list at least one sample size')


def _run_reps(config: ExperimentConfig,
              statistic: Callable[[int, int], Optional[Dict[str, float]]]) -> List[Tuple]:
    """
    Evaluate ``statistic(N, seed)`` for every (N, rep), in task order.

    A None result marks a non-converged inner solve.

    Raises:
        NonConvergenceError: if more than MAX_EXCLUDED_FRACTION of the reps are excluded
    """
    tasks = [(N, rep) for N in config.n_grid for rep in range(config.reps)]

    def run(task):
        N, rep = task
        seed = rep_seed(config, N, rep)
        return N, rep, seed, statistic(N, seed)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    excluded = [(N, rep, seed) for N, rep, seed, value in results if value is None]
    for N, rep, seed in excluded:
        logger.warning(f'Excluded non-converged solve at N={N}, rep={rep}, seed={seed}')
    if len(excluded) > MAX_EXCLUDED_FRACTION * len(results):
        raise NonConvergenceError(
            f'{len(excluded)} of {len(results)} solves did not converge '
            f'(more than {MAX_EXCLUDED_FRACTION:.0%}); seeds: {[seed for _, _, seed in excluded]}'
        )
    return results


def _records(results, name: str) -> List[RepRecord]:
    return [
        RepRecord(N, rep, float('nan') if value is None else float(value[name]), value is not None, seed)
        for N, rep, seed, value in results
    ]


def summarize(records: List[RepRecord], fitted: str) -> List[SummaryRow]:
    """
    Per-N mean, variance, mean square and the Monte Carlo standard error of the
    fitted column over the converged reps. n_reps counts every rep of that N,
    n_excluded the non-converged ones among them.
    """
    rows = []
    for N in sorted({r.N for r in records}):
        at_N = [r for r in records if r.N == N]
        values = np.array([r.statistic for r in at_N if r.converged])
        n = values.shape[0]
        excluded = len(at_N) - n
        if n == 0:
            rows.append(SummaryRow(N, float('nan'), float('nan'), float('nan'), float('nan'), len(at_N), excluded))
            continue
        squares = values * values
        target = squares if fitted == 'mse' else values
        stderr = float(np.std(target, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append(SummaryRow(
            N=N,
            mean=float(np.mean(values)),
            variance=float(np.var(values, ddof=1)) if n > 1 else 0.0,
            mse=float(np.mean(squares)),
            stderr=stderr,
            n_reps=len(at_N),
            n_excluded=excluded,
        ))
    return rows


def _fit(summary: List[SummaryRow], fitted: str) -> SlopeFit:
    pairs = [(row.N, getattr(row, fitted)) for row in summary if row.n_reps > row.n_excluded]
    try:
        return fit_loglog_slope(pairs)
    except ValidationError as exc:
        logger.info(f'Slope undefined: {exc.messages[0]}')
        return SlopeFit.undefined(len(pairs))


def _rate_result(label: str, fitted: str, config: ExperimentConfig, results, name: str) -> RateResult:
    records = _records(results, name)
    summary = summarize(records, fitted)
    return RateResult(label, fitted, config.reps, records, summary, _fit(summary, fitted))


def cost_rate_experiment(config: ExperimentConfig,
                         reference: Optional[PopulationReference] = None) -> RateResult:
    """
    Squared error (S_N - S_pop)^2 of the empirical entropic cost; the MSE is
    fitted against N (slope near -1 expected).
    """
    _require_grid(config)
    reference = reference or population_reference(config)

    def statistic(N, seed):
        problem, _ = draw_empirical(config, N, seed)
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        if not solution.converged:
            return None
        return {'error': solution.primal_value - reference.value}

    return _rate_result('cost', 'mse', config, _run_reps(config, statistic), 'error')


def _check_lp_sizes(config: ExperimentConfig, reference: PopulationReference, p: int) -> None:
    if config.dimension == 1:
        return
    cap = get_lp_cap()
    atoms = [pop.to_measure().size for pop in config.populations]
    for N in config.n_grid:
        bound = int(np.prod([min(N, a) for a in atoms], dtype=np.int64))
        size = bound * reference.barycenter.size
        if size > cap:
            raise CapacityError(f'W_{p} barycenter LP at N={N}', size, cap)


def barycenter_rate_experiment(config: ExperimentConfig, p: Optional[int] = None,
                               reference: Optional[PopulationReference] = None) -> RateResult:
    """
    W_p^p between the population and the empirical barycenter; the mean is
    fitted against N (slope near -1/2 expected for d = 1).

    Raises:
        CapacityError: before any solve, naming the first N whose LP would exceed the cap
    """
    _require_grid(config)
    p = config.p if p is None else int(p)
    if p not in (1, 2):
        raise ValidationError(f'p must be 1 or 2, got {p}')
    reference = reference or population_reference(config)
    _check_lp_sizes(config, reference, p)

    def statistic(N, seed):
        problem, _ = draw_empirical(config, N, seed)
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        if not solution.converged:
            return None
        barycenter = compute_barycenter(solution, problem)
        return {'wp': wasserstein_p_power(reference.barycenter.measure, barycenter.measure, p)}

    return _rate_result(f'w{p}', 'mean', config, _run_reps(config, statistic), 'wp')


def _quantile_rows(rate: RateResult, observable: str) -> List[QuantileRow]:
    rows = []
    for N in sorted({r.N for r in rate.records}):
        values = np.array([r.statistic for r in rate.records if r.N == N and r.converged])
        if values.size == 0:
            continue
        q50, q90 = np.quantile(values, [0.5, 0.9])
        rows.append(QuantileRow(N, float(q50), float(q90), observable))
    return rows


def quantile_ratio(rows: List[QuantileRow]) -> float:
    """max / min of the 90% quantiles across N; 1 when they are all zero."""
    q90 = [row.q90 for row in rows]
    if not q90 or max(q90) == 0.0:
        return 1.0
    if min(q90) <= 0.0:
        return float('inf')
    return max(q90) / min(q90)


def test_function_concentration(config: ExperimentConfig, h=None,
                                reference: Optional[PopulationReference] = None) -> ConcentrationResult:
    """
    sqrt(N) |nu_pop(h) - nu_N(h)| for the barycenter and sqrt(N) |pi_pop(g) - pi_N(g)|
    for the coupling, with g = c_alpha for the 'cost' family and h o T_alpha otherwise.
    """
    _require_grid(config)
    h = config.test_function if h is None else h
    reference = reference or population_reference(config)
    g = coupling_observable(h, config.alpha)
    on_points = not (isinstance(h, TestFunction) and h.is_coupling_observable)
    bary_value = integrate(reference.barycenter, h) if on_points else None
    coupling_value = coupling_expectation(reference.solution, reference.problem, g)

    def statistic(N, seed):
        problem, _ = draw_empirical(config, N, seed)
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        if not solution.converged:
            return None
        scale = math.sqrt(N)
        values = {'coupling': scale * abs(coupling_value - coupling_expectation(solution, problem, g))}
        if on_points:
            barycenter = compute_barycenter(solution, problem)
            values['barycenter'] = scale * abs(bary_value - integrate(barycenter, h))
        return values

    results = _run_reps(config, statistic)
    coupling = _rate_result('coupling', 'mean', config, results, 'coupling')
    barycenter = _rate_result('barycenter', 'mean', config, results, 'barycenter') if on_points else None

    quantiles, ratios = [], {}
    for name, rate in (('barycenter', barycenter), ('coupling', coupling)):
        if rate is None:
            continue
        rows = _quantile_rows(rate, name)
        quantiles.extend(rows)
        ratios[name] = quantile_ratio(rows)
    result = ConcentrationResult(barycenter, coupling, quantiles, ratios)
    for name, ok in result.bounded.items():
        if not ok:
            logger.warning(f'{name} 90% quantiles not bounded: max/min ratio {ratios[name]:.3f}')
    return result


def _population_potentials(reference: PopulationReference) -> List[np.ndarray]:
    """Population potentials on every population atom; NaN on zero-probability atoms."""
    solution = reference.solution
    full = []
    for values, keep, n in zip(solution.potentials.values, solution.supports, solution.original_shape):
        array = np.full(n, np.nan)
        array[keep] = values
        full.append(array)
    return full


def gradient_concentration_experiment(config: ExperimentConfig,
                                      reference: Optional[PopulationReference] = None) -> RateResult:
    """
    ||grad Phi_N(f*)||, the empirical dual gradient at the population potentials
    restricted to the sampled atoms; the mean is fitted against N (slope near -1/2).
    """
    _require_grid(config)
    reference = reference or population_reference(config)
    potentials = _population_potentials(reference)

    def statistic(N, seed):
        problem, hits = draw_empirical(config, N, seed)
        restricted = [f[hit] for f, hit in zip(potentials, hits)]
        return {'gradient': gradient_norm(restricted, problem)}

    return _rate_result('gradient', 'mean', config, _run_reps(config, statistic), 'gradient')


def gamma_experiment(config: ExperimentConfig, epsilon_grid=None) -> GammaResult:
    """
    S_eps and W_2 to the unregularized barycenter along an epsilon grid,
    solved by continuation (each solve starts from the previous potentials).

    Checks S_exact <= S_eps <= S_exact + eps (m - 1) log(max_j N_j), that
    S_eps does not increase as eps decreases, and that W_2 at the smallest
    eps is not above W_2 at the largest.
    """
    grid = tuple(config.epsilon_grid if epsilon_grid is None else epsilon_grid)
    if not grid or any(e <= 0 for e in grid):
        raise ValidationError('epsilon_grid must list positive values')
    base = config.population_problem()
    stripped, _ = base.stripped()
    exact = exact_mot(base)
    exact_barycenter = pushforward_coupling(exact.coupling, base)
    log_atoms = math.log(max(stripped.shape))

    rows, init = [], None
    for eps in grid:
        problem = base.with_epsilon(eps)
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps, init=init)
        init = solution.potentials
        w2 = float('nan')
        if solution.converged:
            barycenter = compute_barycenter(solution, problem)
            w2 = wasserstein_p(barycenter.measure, exact_barycenter, 2)
        rows.append(GammaRow(
            epsilon=eps,
            s_eps=solution.primal_value,
            s_exact=exact.value,
            upper_bound=exact.value + eps * (base.m - 1) * log_atoms,
            w2_to_exact=w2,
            sweeps=solution.iterations,
            converged=solution.converged,
        ))

    slack = CHECK_SLACK * max(1.0, abs(exact.value))
    sandwich = all(r.s_exact - slack <= r.s_eps <= r.upper_bound + slack for r in rows)
    by_eps = sorted(rows, key=lambda r: -r.epsilon)
    monotone = all(b.s_eps <= a.s_eps + slack for a, b in zip(by_eps, by_eps[1:]))
    trend = not (by_eps[-1].w2_to_exact > by_eps[0].w2_to_exact + CHECK_SLACK)
    if not sandwich:
        logger.warning('Regularized values left the [S_exact, S_exact + eps (m-1) log N] band')
    if not monotone:
        logger.warning('S_eps increased along decreasing epsilon')
    return GammaResult(rows, exact.value, sandwich, monotone, trend)


def stability_experiment(config: ExperimentConfig, deltas=None) -> StabilityResult:
    """
    W_1 between the barycenters of the populations and of their perturbations
    against the aggregate shift (sum_j W_2(nu_j, nu~_j)^2)^(1/2).

    C in W_1 <= sqrt(m) Delta + C sqrt(Delta) is fitted at the largest delta;
    the smallest delta must satisfy the bound and W_1 must not increase as
    delta decreases.

    Raises:
        ValidationError: if a perturbation moves atoms out of [-1, 1]^d
    """
    deltas = tuple(config.deltas if deltas is None else deltas)
    if not deltas or any(d < 0 for d in deltas):
        raise ValidationError('deltas must list nonnegative perturbation sizes')
    base = config.population_problem()
    base_solution = sinkhorn_solve(base, config.tol, config.max_sweeps)
    if not base_solution.converged:
        raise NonConvergenceError('Population solve did not converge')
    base_barycenter = compute_barycenter(base_solution, base)

    measured, converged = [], []
    for delta in deltas:
        perturbed = [pop.perturbed(delta) for pop in config.populations]
        aggregate = math.sqrt(sum(
            wasserstein_p(pop.to_measure(), moved.to_measure(), 2) ** 2
            for pop, moved in zip(config.populations, perturbed)
        ))
        problem = Problem([moved.to_measure() for moved in perturbed], base.alpha, base.epsilon)
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        converged.append(solution.converged)
        w1 = float('nan')
        if solution.converged:
            w1 = wasserstein_p(base_barycenter.measure, compute_barycenter(solution, problem).measure, 1)
        measured.append((delta, aggregate, w1))

    root_m = math.sqrt(base.m)
    _, top_aggregate, top_w1 = max(measured, key=lambda row: row[0])
    c_fitted = 0.0
    if top_aggregate > 0 and np.isfinite(top_w1):
        c_fitted = max(0.0, (top_w1 - root_m * top_aggregate) / math.sqrt(top_aggregate))
    rows = [
        StabilityRow(delta, aggregate, w1, root_m * aggregate + c_fitted * math.sqrt(aggregate), c_fitted)
        for delta, aggregate, w1 in measured
    ]

    by_delta = sorted(rows, key=lambda r: -r.delta)
    smallest = by_delta[-1]
    within = bool(smallest.w1_barycenter <= smallest.rhs + CHECK_SLACK)
    trend = all(b.w1_barycenter <= a.w1_barycenter + CHECK_SLACK for a, b in zip(by_delta, by_delta[1:]))
    if not trend:
        logger.warning('Barycenter W_1 did not shrink with the perturbation size')
    return StabilityResult(rows, c_fitted, within, trend, converged)
