import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from barycenters.experiments import SlopeFit
from barycenters.experiments.runners import RateResult, RepRecord, summarize
from barycenters.management.commands.msb import Command
from barycenters.models import ExperimentRun

SMALL_POPULATIONS = [
    {'kind': 'atoms', 'points': [[-0.8], [0.1], [0.7]], 'weights': [0.3, 0.5, 0.2]},
    {'kind': 'atoms', 'points': [[-0.5], [0.0], [0.9]], 'weights': [0.25, 0.25, 0.5]},
]


class MsbCommandTests(TestCase):
    """Test suite for the msb management command"""

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def write_config(self, name='config.json', **changes):
        document = {
            'populations': SMALL_POPULATIONS,
            'alpha': [0.5, 0.5],
            'epsilon': 1.0,
            'n_grid': [10, 20, 40],
            'reps': 3,
            'seed': 2024,
            'epsilon_grid': [1.0, 0.3],
            'deltas': [0.04, 0.0],
        }
        document.update(changes)
        path = self.root / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return path

    def run_msb(self, subcommand, config, out, *extra):
        stdout = StringIO()
        target = [] if out is None else ['--out', str(out)]
        call_command('msb', subcommand, '--config', str(config), *target, *extra, stdout=stdout)
        return stdout.getvalue()

    def manifest(self, out):
        return json.loads((out / 'manifest.json').read_text(encoding='utf-8'))

    def test_solve_dirac(self):
        """Single atoms at 1 and -1 give S = 1 and a manifest"""
        config = self.write_config(
            populations=[
                {'kind': 'atoms', 'points': [[1.0]], 'weights': [1.0]},
                {'kind': 'atoms', 'points': [[-1.0]], 'weights': [1.0]},
            ],
            epsilon=0.1,
        )
        out = self.root / 'dirac'

        output = self.run_msb('solve', config, out)

        solution = json.loads((out / 'solution.json').read_text(encoding='utf-8'))
        self.assertTrue(solution['converged'])
        self.assertAlmostEqual(solution['primal_value'], 1.0, places=12)
        manifest = self.manifest(out)
        self.assertEqual(manifest['command'], 'solve')
        self.assertEqual(manifest['exit_code'], 0)
        self.assertEqual(manifest['files'], ['solution.json'])
        self.assertEqual(len(manifest['config_hash']), 64)
        self.assertIn('solve complete', output)

    def test_run_is_recorded(self):
        """Every run should add a row to the run ledger"""
        config = self.write_config()
        out = self.root / 'ledger'

        self.run_msb('solve', config, out)

        run = ExperimentRun.objects.get()
        self.assertEqual(run.subcommand, 'solve')
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(run.seed, 2024)
        self.assertEqual(run.output_dir, str(out))

    def test_missing_config(self):
        """A missing config file should exit 2 and name the path"""
        missing = self.root / 'nowhere.json'

        with self.assertRaises(CommandError) as cm:
            self.run_msb('solve', missing, self.root / 'out')

        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn(str(missing), str(cm.exception))
        self.assertEqual(ExperimentRun.objects.get().exit_code, 2)

    def test_invalid_config(self):
        """An invalid config should exit 2 with the field error"""
        config = self.write_config(reps=0)

        with self.assertRaises(CommandError) as cm:
            self.run_msb('rate-cost', config, self.root / 'out')

        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn('reps must be >= 1', str(cm.exception))

    @override_settings(MSB_LP_CAP=4)
    def test_capacity_error(self):
        """A coupling above the LP cap should exit 4 and still write the manifest"""
        config = self.write_config()
        out = self.root / 'exact'

        with self.assertRaises(CommandError) as cm:
            self.run_msb('exact', config, out)

        self.assertEqual(cm.exception.returncode, 4)
        self.assertIn('above the cap of 4', str(cm.exception))
        self.assertEqual(self.manifest(out)['exit_code'], 4)

    def test_non_convergence(self):
        """A non-converged solve should exit 3 after writing its solution"""
        config = self.write_config()
        out = self.root / 'stuck'

        with self.assertRaises(CommandError) as cm:
            self.run_msb('solve', config, out, '--epsilon', '0.01', '--tol', '1e-14', '--max-sweeps', '1')

        self.assertEqual(cm.exception.returncode, 3)
        solution = json.loads((out / 'solution.json').read_text(encoding='utf-8'))
        self.assertFalse(solution['converged'])
        self.assertEqual(solution['iterations'], 1)
        self.assertEqual(self.manifest(out)['exit_code'], 3)

    def test_overrides_reach_the_manifest(self):
        """Command-line overrides should appear in the recorded config"""
        config = self.write_config()
        out = self.root / 'override'

        self.run_msb('solve', config, out, '--epsilon', '0.5', '--seed', '9')

        manifest = self.manifest(out)
        self.assertEqual(manifest['config']['epsilon'], 0.5)
        self.assertEqual(manifest['seed'], 9)

    def test_reruns_are_byte_identical(self):
        """rate-cost should reproduce its CSVs across reruns and thread counts"""
        config = self.write_config()
        first, second, threaded = self.root / 'first', self.root / 'second', self.root / 'threaded'

        self.run_msb('rate-cost', config, first)
        self.run_msb('rate-cost', config, second)
        self.run_msb('rate-cost', config, threaded, '--threads', '3')

        for name in ('rates.csv', 'summary.csv', 'slope.csv'):
            expected = (first / name).read_bytes()
            self.assertEqual((second / name).read_bytes(), expected)
            self.assertEqual((threaded / name).read_bytes(), expected)

    def test_rate_files(self):
        """rate-cost should write one row per rep and one summary row per N"""
        config = self.write_config()
        out = self.root / 'rate'

        self.run_msb('rate-cost', config, out)

        lines = (out / 'rates.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'N,rep,statistic,converged,seed')
        self.assertEqual(len(lines), 1 + 9)
        self.assertTrue(lines[1].startswith('10,0,'))
        self.assertEqual(lines[1].split(',')[3], 'true')
        summary = (out / 'summary.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(summary[0], 'N,mean,variance,mse,stderr,n_reps')
        self.assertEqual(len(summary), 4)
        self.assertEqual(self.manifest(out)['excluded'], [])

    def test_declared_files(self):
        """Each subcommand should write exactly its declared files"""
        config = self.write_config()
        expected = {
            'barycenter': ['barycenter.json', 'solution.json'],
            'exact': ['coupling.csv', 'exact.json'],
            'rate-bary': ['rates.csv', 'slope.csv', 'summary.csv'],
            'rate-gradient': ['rates.csv', 'slope.csv', 'summary.csv'],
            'concentration': [
                'coupling_rates.csv', 'coupling_slope.csv', 'coupling_summary.csv',
                'quantiles.csv', 'rates.csv', 'slope.csv', 'summary.csv',
            ],
            'gamma': ['gamma.csv'],
            'stability': ['stability.csv'],
            'concavity': ['concavity.json'],
            'validate': ['validation.json'],
        }

        for subcommand, files in expected.items():
            out = self.root / subcommand
            with self.subTest(subcommand=subcommand):
                self.run_msb(subcommand, config, out)
                self.assertEqual(self.manifest(out)['files'], files)
                for name in files:
                    self.assertTrue((out / name).is_file(), name)

        self.assertEqual(ExperimentRun.objects.count(), len(expected))

    def test_dump_cost(self):
        """--dump-cost should write one row per coupling entry"""
        config = self.write_config()
        out = self.root / 'cost'

        self.run_msb('solve', config, out, '--dump-cost')

        lines = (out / 'cost.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'i_1,i_2,cost')
        self.assertEqual(len(lines), 1 + 9)

    def test_rate_bary_order_flag(self):
        """--p 2 should switch rate-bary to W_2"""
        config = self.write_config()
        out = self.root / 'w2'

        output = self.run_msb('rate-bary', config, out, '--p', '2')

        self.assertIn('w2: slope=', output)

    def test_validate_report(self):
        """validate should report shape, caps and population checks"""
        config = self.write_config()
        out = self.root / 'validate'

        self.run_msb('validate', config, out)

        report = json.loads((out / 'validation.json').read_text(encoding='utf-8'))
        self.assertEqual(report['m'], 2)
        self.assertEqual(report['shape'], [3, 3])
        self.assertTrue(report['within_lp_cap'])
        self.assertTrue(all(pop['ok'] for pop in report['populations']))

    def test_unknown_subcommand(self):
        """An unknown subcommand should be rejected"""
        with self.assertRaises(CommandError):
            call_command('msb', 'plot', '--config', 'x.json', '--out', str(self.root))

    def test_monte_carlo_reruns_are_byte_identical(self):
        """Every Monte Carlo subcommand reproduces its CSVs across reruns and thread counts"""
        config = self.write_config()
        for subcommand in ('rate-bary', 'rate-gradient', 'concentration'):
            with self.subTest(subcommand=subcommand):
                first = self.root / f'{subcommand}-first'
                second = self.root / f'{subcommand}-second'
                threaded = self.root / f'{subcommand}-threaded'

                self.run_msb(subcommand, config, first)
                self.run_msb(subcommand, config, second)
                self.run_msb(subcommand, config, threaded, '--threads', '3')

                names = sorted(path.name for path in first.glob('*.csv'))
                self.assertTrue(names)
                for name in names:
                    expected = (first / name).read_bytes()
                    self.assertEqual((second / name).read_bytes(), expected, name)
                    self.assertEqual((threaded / name).read_bytes(), expected, name)

    def test_concavity_report(self):
        """L and trials come from the config and every check holds"""
        config = self.write_config(L=0.5, trials=7)
        out = self.root / 'concavity'

        output = self.run_msb('concavity', config, out)

        report = json.loads((out / 'concavity.json').read_text(encoding='utf-8'))
        self.assertEqual(report['L'], 0.5)
        self.assertEqual(report['trials'], 7)
        self.assertTrue(report['ok'])
        self.assertEqual(report['violations'], [])
        self.assertGreater(report['beta'], 0.0)
        self.assertGreaterEqual(report['L_effective'], 0.5)
        self.assertEqual(report['gradient_directions'], 20)
        self.assertLessEqual(report['gradient_max_relative_error'], 1e-5)
        self.assertEqual(self.manifest(out)['exit_code'], 0)
        self.assertIn('0 violation(s)', output)

    def test_failed_check_exits_with_one(self):
        """A converged epsilon grid whose sandwich check fails exits 1 with its files written"""
        # one sweep at epsilon 0.01 moves all mass onto the diagonal, residual 0.5
        config = self.write_config(
            populations=[
                {'kind': 'atoms', 'points': [[-1.0], [1.0]], 'weights': [0.4, 0.6]},
                {'kind': 'atoms', 'points': [[-1.0], [1.0]], 'weights': [0.6, 0.4]},
            ],
            epsilon_grid=[0.01],
        )
        out = self.root / 'gamma'

        with self.assertRaises(CommandError) as cm:
            self.run_msb('gamma', config, out, '--tol', '0.6')

        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn('sandwich', str(cm.exception))
        lines = (out / 'gamma.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(lines), 2)
        self.assertTrue(lines[1].endswith(',true'))
        manifest = self.manifest(out)
        self.assertEqual(manifest['exit_code'], 1)
        self.assertEqual(manifest['files'], ['gamma.csv'])
        self.assertEqual(ExperimentRun.objects.get().exit_code, 1)

    def test_output_defaults_to_config(self):
        """Without --out the files go to the config's output directory"""
        target = self.root / 'from-config'
        config = self.write_config(output=str(target))

        self.run_msb('solve', config, None)

        self.assertTrue((target / 'solution.json').is_file())
        self.assertEqual(self.manifest(target)['files'], ['solution.json'])
        self.assertEqual(ExperimentRun.objects.get().output_dir, str(target))

    def test_out_flag_wins_over_config_output(self):
        """--out should take precedence over the config output"""
        config = self.write_config(output=str(self.root / 'unused'))
        out = self.root / 'flag'

        self.run_msb('solve', config, out)

        self.assertTrue((out / 'solution.json').is_file())
        self.assertFalse((self.root / 'unused').exists())

    def test_missing_output_directory(self):
        """No --out and no config output is a validation error"""
        config = self.write_config()

        with self.assertRaises(CommandError) as cm:
            self.run_msb('solve', config, None)

        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn('No output directory', str(cm.exception))
        run = ExperimentRun.objects.get()
        self.assertEqual(run.exit_code, 2)
        self.assertEqual(run.output_dir, '')


class ExclusionLedgerTests(SimpleTestCase):
    """Excluded reps are collected for the manifest"""

    def test_excluded_reps_are_collected(self):
        """Non-converged reps should be listed with their label, N, rep and seed"""
        records = [
            RepRecord(10, 0, 0.5, True, 11),
            RepRecord(10, 1, float('nan'), False, 12),
            RepRecord(20, 0, float('nan'), False, 13),
        ]
        summary = summarize(records, 'mse')
        rate = RateResult('cost', 'mse', 2, records, summary, SlopeFit.undefined(1))
        state = {'excluded': []}
        stdout = StringIO()

        Command(stdout=stdout)._rate_summary(rate, state)

        self.assertEqual(state['excluded'], [
            {'label': 'cost', 'N': 10, 'rep': 1, 'seed': 12},
            {'label': 'cost', 'N': 20, 'rep': 0, 'seed': 13},
        ])
        self.assertIn('2 non-converged solve(s) excluded', stdout.getvalue())
