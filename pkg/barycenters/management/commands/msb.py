"""
Management command running the solver and the Monte Carlo experiments.

Usage:
    python manage.py msb solve --config configs/dirac.json --out runs/dirac
    python manage.py msb rate-cost --config configs/rate_cost.json --out runs/rate-cost --threads 4
    ./msb gamma --config configs/gamma.json --out runs/gamma --tol 1e-10

Every run writes its result files plus manifest.json into --out. Exit codes:
0 success, 1 failed experiment check, 2 validation error, 3 non-convergence,
4 capacity error. --out defaults to the "output" key of the config.
"""

import logging
import time
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from barycenters.barycenter import compute_barycenter
from barycenters.constants import (
    EXIT_CAPACITY,
    EXIT_CHECK_FAILED,
    EXIT_NON_CONVERGENCE,
    EXIT_OK,
    EXIT_VALIDATION,
    SUBCOMMANDS,
)
from barycenters.cost import CostAccessor, cost_sup_bound
from barycenters.exact import exact_mot
from barycenters.exceptions import (
    CapacityError,
    CheckFailedError,
    InfeasibleError,
    NonConvergenceError,
)
from barycenters.experiments import (
    barycenter_rate_experiment,
    cost_rate_experiment,
    gamma_experiment,
    gradient_concentration_experiment,
    load_config,
    stability_experiment,
    test_function_concentration,
)
from barycenters.experiments import records
from barycenters.measures import validate
from barycenters.models import ExperimentRun
from barycenters.solver import PotentialVector, concavity_probe, finite_difference_check, sinkhorn_solve
from barycenters.utils import get_enumeration_cap, get_lp_cap
from msb_lab.versioning import get_artifact_version

logger = logging.getLogger(__name__)

FD_DIRECTIONS = 20
FD_TOLERANCE = 1e-5


class Command(BaseCommand):
    help = 'Solve multimarginal Schrodinger barycenter problems and run the rate experiments'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='subcommand', required=True)
        for name, description in SUBCOMMANDS:
            sub = subparsers.add_parser(name, help=description, description=description)
            sub.add_argument('--config', required=True, help='Path to the JSON experiment config')
            sub.add_argument('--out', help='Output directory (created if missing); defaults to the config "output"')
            sub.add_argument('--epsilon', type=float, help='Override the config epsilon')
            sub.add_argument('--tol', type=float, help='Override the marginal residual tolerance')
            sub.add_argument('--max-sweeps', type=int, dest='max_sweeps', help='Override the sweep limit')
            sub.add_argument('--seed', type=int, help='Override the master seed (unsigned 64-bit)')
            sub.add_argument('--threads', type=int, help='Worker threads for Monte Carlo reps')
            if name == 'solve':
                sub.add_argument(
                    '--dump-cost',
                    action='store_true',
                    help='Also write the cost tensor to cost.csv',
                )
            if name == 'rate-bary':
                sub.add_argument('--p', type=int, choices=[1, 2], help='Wasserstein order (default from config)')

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        started = time.perf_counter()
        state = {'config': None, 'out': None, 'files': [], 'excluded': [], 'exit_code': EXIT_OK}

        try:
            self._run(subcommand, options, state)
        except ValidationError as exc:
            state['exit_code'] = EXIT_VALIDATION
            raise CommandError(f'Validation error: {"; ".join(exc.messages)}', returncode=EXIT_VALIDATION)
        except NonConvergenceError as exc:
            state['exit_code'] = EXIT_NON_CONVERGENCE
            raise CommandError(f'Non-convergence: {exc}', returncode=EXIT_NON_CONVERGENCE)
        except CapacityError as exc:
            state['exit_code'] = EXIT_CAPACITY
            raise CommandError(f'Capacity exceeded: {exc}', returncode=EXIT_CAPACITY)
        except InfeasibleError as exc:
            state['exit_code'] = EXIT_VALIDATION
            raise CommandError(f'Infeasible: {exc}', returncode=EXIT_VALIDATION)
        except CheckFailedError as exc:
            state['exit_code'] = EXIT_CHECK_FAILED
            raise CommandError(f'Check failed: {exc}', returncode=EXIT_CHECK_FAILED)
        finally:
            wall_time = time.perf_counter() - started
            self._finish(subcommand, state, wall_time)

    def _run(self, subcommand, options, state):
        config = load_config(options['config']).with_overrides(
            epsilon=options.get('epsilon'),
            tol=options.get('tol'),
            max_sweeps=options.get('max_sweeps'),
            seed=options.get('seed'),
            threads=options.get('threads'),
        )
        state['config'] = config
        if not (options.get('out') or config.output):
            raise ValidationError('No output directory: pass --out or set "output" in the config')
        out = Path(options.get('out') or config.output)
        state['out'] = out
        out.mkdir(parents=True, exist_ok=True)
        self.stdout.write(f'msb {subcommand}: m={config.m}, d={config.dimension}, epsilon={config.epsilon:g}')

        handler = getattr(self, f'run_{subcommand.replace("-", "_")}')
        handler(config, options, out, state)
        self.stdout.write(self.style.SUCCESS(
            f'✓ {subcommand} complete: {len(state["files"])} file(s) written to {out}'
        ))

    def _finish(self, subcommand, state, wall_time):
        out = state['out']
        config = state['config']
        config_hash = config.config_hash() if config is not None else ''
        seed = config.seed if config is not None else 0
        if out is not None and out.is_dir():
            manifest = records.build_manifest(
                subcommand,
                config_hash,
                seed,
                wall_time,
                state['files'],
                extra={
                    'exit_code': state['exit_code'],
                    'excluded': state['excluded'],
                    'config': config.to_dict() if config is not None else None,
                },
            )
            records.write_json(out / 'manifest.json', manifest)
        self._record_run(subcommand, config_hash, seed, out, state['exit_code'], wall_time)

    def _record_run(self, subcommand, config_hash, seed, out, exit_code, wall_time):
        try:
            ExperimentRun.objects.create(  # type: ignore[attr-defined]
                subcommand=subcommand,
                config_hash=config_hash,
                seed=seed,
                version=get_artifact_version(),
                output_dir='' if out is None else str(out),
                exit_code=exit_code,
                wall_time=wall_time,
            )
        except DatabaseError as exc:
            logger.warning(f'Run ledger unavailable, run not recorded: {exc}')

    def _not_converged(self, what):
        self.stdout.write(self.style.ERROR(f'✗ {what} did not converge; results written for inspection'))
        raise NonConvergenceError(f'{what} did not converge')

    # Subcommands

    def _solve(self, config, out, state):
        problem = config.population_problem()
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        records.write_json(out / 'solution.json', solution.to_dict())
        state['files'].append(out / 'solution.json')
        self.stdout.write(
            f'  sweeps={solution.iterations} residual={solution.marginal_residual:.3e} '
            f'primal={solution.primal_value:.12g} dual={solution.dual_value:.12g}'
        )
        return problem, solution

    def run_solve(self, config, options, out, state):
        problem, solution = self._solve(config, out, state)
        if options.get('dump_cost'):
            with open(out / 'cost.csv', 'w', newline='', encoding='utf-8') as handle:
                rows = CostAccessor.for_problem(problem).dump_csv(handle)
            state['files'].append(out / 'cost.csv')
            self.stdout.write(f'  cost.csv: {rows} entries')
        if not solution.converged:
            self._not_converged('Population solve')

    def run_barycenter(self, config, options, out, state):
        problem, solution = self._solve(config, out, state)
        if not solution.converged:
            self._not_converged('Population solve')
        barycenter = compute_barycenter(solution, problem)
        records.write_json(out / 'barycenter.json', barycenter.to_dict())
        state['files'].append(out / 'barycenter.json')
        self.stdout.write(f'  barycenter: {barycenter.size} atoms')

    def run_exact(self, config, options, out, state):
        report = exact_mot(config.population_problem())
        records.write_json(out / 'exact.json', report.to_dict())
        with open(out / 'coupling.csv', 'w', newline='', encoding='utf-8') as handle:
            report.write_coupling_csv(handle)
        state['files'] += [out / 'exact.json', out / 'coupling.csv']
        self.stdout.write(f'  value={report.value:.12g} pivots={report.pivots} support={len(report.coupling)}')

    def _rate_summary(self, rate, state):
        fit = rate.fit
        if fit.defined:
            self.stdout.write(f'  {rate.label}: slope={fit.slope:.4f} r2={fit.r2:.4f} over {fit.n_points} N values')
        else:
            self.stdout.write(self.style.WARNING(f'  {rate.label}: slope undefined ({fit.n_points} usable N values)'))
        if rate.excluded:
            self.stdout.write(self.style.WARNING(f'  {len(rate.excluded)} non-converged solve(s) excluded'))
        state['excluded'] += [{'label': rate.label, 'N': r.N, 'rep': r.rep, 'seed': r.seed} for r in rate.excluded]

    def run_rate_cost(self, config, options, out, state):
        rate = cost_rate_experiment(config)
        state['files'] += records.write_rate_files(out, rate)
        self._rate_summary(rate, state)

    def run_rate_bary(self, config, options, out, state):
        rate = barycenter_rate_experiment(config, p=options.get('p'))
        state['files'] += records.write_rate_files(out, rate)
        self._rate_summary(rate, state)

    def run_rate_gradient(self, config, options, out, state):
        rate = gradient_concentration_experiment(config)
        state['files'] += records.write_rate_files(out, rate)
        self._rate_summary(rate, state)

    def run_concentration(self, config, options, out, state):
        result = test_function_concentration(config)
        state['files'] += records.write_concentration_files(out, result)
        state['excluded'] += [{'label': 'concentration', 'N': r.N, 'rep': r.rep, 'seed': r.seed}
                              for r in result.coupling.excluded]
        for name, bounded in result.bounded.items():
            style = self.style.SUCCESS if bounded else self.style.WARNING
            self.stdout.write(style(f'  {name}: 90% quantile ratio {result.ratios[name]:.3f}'))

    def run_gamma(self, config, options, out, state):
        result = gamma_experiment(config)
        state['files'] += records.write_gamma_file(out, result)
        for label, ok in (('sandwich', result.sandwich_holds), ('monotone', result.monotone),
                          ('W2 trend', result.trend_ok)):
            style = self.style.SUCCESS if ok else self.style.WARNING
            self.stdout.write(style(f'  {label}: {"ok" if ok else "violated"}'))
        if not result.all_converged:
            self._not_converged('An epsilon-grid solve')
        if result.failed_checks:
            raise CheckFailedError('gamma checks', result.failed_checks)

    def run_stability(self, config, options, out, state):
        result = stability_experiment(config)
        state['files'] += records.write_stability_file(out, result)
        self.stdout.write(f'  fitted C={result.c_fitted:.6g}, smallest delta within bound: {result.smallest_within_bound}')
        if not result.all_converged:
            self._not_converged('A perturbed solve')
        if result.failed_checks:
            raise CheckFailedError('stability checks', result.failed_checks)

    def run_concavity(self, config, options, out, state):
        problem = config.population_problem()
        solution = sinkhorn_solve(problem, config.tol, config.max_sweeps)
        if not solution.converged:
            self._not_converged('Population solve')
        report = concavity_probe(problem, L=config.L, trials=config.trials, seed=config.seed, solution=solution)
        gradient_rows = finite_difference_check(
            problem, PotentialVector.zeros(problem.shape), FD_DIRECTIONS, config.seed)
        worst = max(row['relative_error'] for row in gradient_rows)
        document = {
            **report.to_dict(),
            'epsilon': config.epsilon,
            'gradient_directions': len(gradient_rows),
            'gradient_max_relative_error': worst,
        }
        records.write_json(out / 'concavity.json', document)
        state['files'].append(out / 'concavity.json')
        self.stdout.write(
            f'  beta={report.beta:.6g} over {report.trials} pairs, '
            f'{len(report.violations)} violation(s), gradient error {worst:.2e}'
        )

        failed = []
        if any(v['kind'] == 'concavity' for v in report.violations):
            failed.append('strong concavity')
        if any(v['kind'] == 'pl' for v in report.violations):
            failed.append('PL bound')
        if worst > FD_TOLERANCE:
            failed.append('gradient')
        if failed:
            raise CheckFailedError('concavity checks', failed)

    def run_validate(self, config, options, out, state):
        problem = config.population_problem()
        reports = []
        for j, pop in enumerate(config.populations):
            report = validate(pop.to_measure())
            reports.append({'index': j, 'kind': pop.kind, 'atoms': pop.to_measure().size,
                            'ok': report.ok, 'violation': report.violation})
        document = {
            'config_hash': config.config_hash(),
            'm': config.m,
            'dimension': config.dimension,
            'shape': list(problem.shape),
            'coupling_size': problem.size,
            'cost_sup_bound': cost_sup_bound(problem.alpha, config.dimension, config.m),
            'within_lp_cap': problem.size <= get_lp_cap(),
            'within_enumeration_cap': problem.size <= get_enumeration_cap(),
            'populations': reports,
        }
        records.write_json(out / 'validation.json', document)
        state['files'].append(out / 'validation.json')
        failed = [r for r in reports if not r['ok']]
        if failed:
            raise ValidationError('; '.join(f'population {r["index"]}: {r["violation"]}' for r in failed))
        self.stdout.write(f'  {config.m} population(s) valid, coupling size {problem.size}')
