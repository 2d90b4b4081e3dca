import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from barycenters.cost import CostAccessor, cost_sup_bound
from barycenters.exceptions import CapacityError
from barycenters.measures import DiscreteMeasure, Problem
from barycenters.solver import (
    PotentialVector,
    coupling_density,
    coupling_weights,
    dual_objective,
    finite_difference_check,
    gibbs_divergence,
    gradient,
    gradient_norm,
    log_partition,
    primal_value,
    shift_potentials,
    sinkhorn_solve,
)
from barycenters.solver.diagnostics import sum_sup_norm


def three_atom_problem(epsilon=1.0):
    """Two 3-atom marginals on the line."""
    return Problem(
        [
            DiscreteMeasure([[-0.8], [0.1], [0.7]], [0.3, 0.5, 0.2]),
            DiscreteMeasure([[-0.5], [0.0], [0.9]], [0.25, 0.25, 0.5]),
        ],
        [0.5, 0.5],
        epsilon,
    )


def three_marginal_problem(epsilon=0.5):
    """Three marginals in the plane with unequal sizes."""
    rng = np.random.default_rng(31)
    marginals = []
    for n in (4, 3, 5):
        weights = rng.uniform(0.5, 1.5, n)
        marginals.append(DiscreteMeasure(rng.uniform(-1, 1, size=(n, 2)), weights / weights.sum()))
    return Problem(marginals, [0.2, 0.3, 0.5], epsilon)


def naive_sinkhorn(problem, sweeps=20_000):
    """Textbook two-marginal scaling iterations in the primal domain."""
    a, b = (mu.weights for mu in problem.marginals)
    K = np.exp(-CostAccessor.for_problem(problem).dense() / problem.epsilon)
    v = np.ones_like(b)
    for _ in range(sweeps):
        u = a / (K @ v)
        v = b / (K.T @ u)
    return u[:, None] * K * v[None, :]


def naive_potentials(problem, sweeps=20_000):
    """Potentials of the textbook iterations, normalized so that a . f = 0."""
    a, b = (mu.weights for mu in problem.marginals)
    K = np.exp(-CostAccessor.for_problem(problem).dense() / problem.epsilon)
    v = np.ones_like(b)
    for _ in range(sweeps):
        u = a / (K @ v)
        v = b / (K.T @ u)
    f = problem.epsilon * np.log(u / a)
    g = problem.epsilon * np.log(v / b)
    shift = float(np.dot(a, f))
    return f - shift, g + shift


def random_problem(rng, m=None, epsilons=(0.05, 0.5, 2.0)):
    """Random sizes, dimension, weights and alpha on [-1, 1]^d."""
    m = int(rng.integers(2, 4)) if m is None else m
    d = int(rng.integers(1, 3))
    marginals = []
    for n in rng.integers(2, 9, size=m):
        weights = rng.uniform(0.2, 1.0, n)
        marginals.append(DiscreteMeasure(rng.uniform(-1, 1, size=(n, d)), weights / weights.sum()))
    return Problem(marginals, rng.dirichlet(np.ones(m)), float(rng.choice(epsilons)))


class SinkhornSolveTests(SimpleTestCase):
    """Test suite for the cyclic multimarginal Sinkhorn solver"""

    def test_dirac_instance(self):
        """Single atoms at 1 and -1 admit one coupling: cost 1 and no entropy"""
        problem = Problem([DiscreteMeasure.dirac(1.0), DiscreteMeasure.dirac(-1.0)], [0.5, 0.5], 0.1)

        solution = sinkhorn_solve(problem)

        self.assertTrue(solution.converged)
        self.assertAlmostEqual(solution.primal_value, 1.0, places=12)
        self.assertAlmostEqual(solution.duality_gap, 0.1, places=12)

    def test_identical_single_atoms_cost_nothing(self):
        """Identical single atoms should cost nothing"""
        point = DiscreteMeasure.dirac([0.2, -0.3])
        problem = Problem([point, point, point], [1 / 3, 1 / 3, 1 / 3], 0.7)

        solution = sinkhorn_solve(problem)

        self.assertAlmostEqual(solution.primal_value, 0.0, places=12)

    def test_matches_textbook_two_marginal_sinkhorn(self):
        """Two-marginal couplings should match the textbook scaling iterations"""
        problem = three_atom_problem(epsilon=0.3)

        solution = sinkhorn_solve(problem, tol=1e-12)

        np.testing.assert_allclose(coupling_weights(solution, problem), naive_sinkhorn(problem), atol=1e-10)

    def test_duality_identity(self):
        """primal - dual = epsilon at the optimum"""
        problem = three_marginal_problem()

        solution = sinkhorn_solve(problem, tol=1e-10)

        self.assertTrue(solution.converged)
        self.assertAlmostEqual(
            solution.primal_value - solution.dual_value,
            problem.epsilon,
            delta=1e-8 * max(1.0, abs(solution.dual_value)),
        )
        self.assertAlmostEqual(primal_value(solution, problem), solution.primal_value, places=12)

    def test_marginal_feasibility(self):
        """Every marginal of the coupling should be within tol"""
        problem = three_marginal_problem()
        tol = 1e-9

        solution = sinkhorn_solve(problem, tol=tol)

        self.assertLessEqual(solution.marginal_residual, tol)
        self.assertLessEqual(solution.gradient_norm, np.sqrt(problem.m) * tol)
        self.assertLessEqual(gradient_norm(solution.potentials, problem), np.sqrt(problem.m) * tol * 1.01)
        pi = coupling_weights(solution, problem)
        for j, mu in enumerate(problem.marginals):
            axes = tuple(k for k in range(problem.m) if k != j)
            np.testing.assert_allclose(pi.sum(axis=axes), mu.weights, atol=1e-8)

    def test_dual_ascent_is_monotone(self):
        """The dual should never decrease along the trace"""
        problem = three_marginal_problem(epsilon=0.2)

        solution = sinkhorn_solve(problem, tol=1e-10)

        self.assertTrue(solution.monotone)
        duals = [dual for dual, _ in solution.trace]
        for before, after in zip(duals, duals[1:]):
            self.assertGreaterEqual(after, before - 1e-12 * max(1.0, abs(before)))

    def test_trace_records_the_dual_of_the_iterate(self):
        """The traced dual should be Phi at the returned potentials"""
        problem = three_marginal_problem(epsilon=0.2)

        with self.assertLogs('barycenters.solver.sinkhorn', level='WARNING'):
            solution = sinkhorn_solve(problem, tol=1e-14, max_sweeps=1)

        expected = dual_objective(solution.potentials, problem)
        self.assertAlmostEqual(solution.trace[0][0], expected, delta=1e-12 * max(1.0, abs(expected)))
        self.assertAlmostEqual(solution.dual_value, expected, delta=1e-12 * max(1.0, abs(expected)))

    def test_ascent_from_a_random_start(self):
        """Block updates never lower the dual, whatever the starting potentials"""
        problem = three_marginal_problem(epsilon=0.3)
        rng = np.random.default_rng(17)
        start = PotentialVector(tuple(rng.uniform(-0.5, 0.5, n) for n in problem.shape))

        solution = sinkhorn_solve(problem, tol=1e-10, init=start)

        self.assertTrue(solution.converged)
        self.assertTrue(solution.monotone)
        duals = [dual for dual, _ in solution.trace]
        for before, after in zip(duals, duals[1:]):
            self.assertGreaterEqual(after, before - 1e-12 * max(1.0, abs(before)))
        self.assertAlmostEqual(duals[-1], dual_objective(solution.potentials, problem), delta=1e-12 * max(1.0, abs(duals[-1])))

    def test_potentials_are_normalized(self):
        """All but the last potential should integrate to zero"""
        problem = three_marginal_problem()

        solution = sinkhorn_solve(problem)

        for j in range(problem.m - 1):
            self.assertAlmostEqual(float(np.dot(problem.marginals[j].weights, solution.potentials[j])), 0.0, places=12)

    def test_bounded_potentials(self):
        """Potentials and their sum should stay within the cost bound"""
        problem = three_atom_problem()
        tol = 1e-9
        bound = cost_sup_bound(problem.alpha, problem.dimension, problem.m)

        solution = sinkhorn_solve(problem, tol=tol)

        self.assertLessEqual(max(solution.potentials.sup_norms()), bound + 10 * tol)
        f, g = solution.potentials.values
        self.assertLessEqual(float(np.max(np.abs(f[:, None] + g[None, :]))), 2 * bound + 10 * tol)

    def test_degenerate_weights_converge_in_one_sweep(self):
        """With alpha = (1, 0) the cost depends on x_1 only and the coupling is the product"""
        problem = Problem(three_atom_problem().marginals, [1.0, 0.0], 0.05)

        solution = sinkhorn_solve(problem)

        self.assertEqual(solution.iterations, 1)
        mu = problem.marginals[0]
        expected = float(np.dot(mu.weights, mu.points[:, 0] ** 2))
        self.assertAlmostEqual(solution.primal_value, expected, places=12)

    def test_primal_grows_with_epsilon(self):
        """The regularized value should increase with epsilon"""
        values = [
            sinkhorn_solve(three_atom_problem(eps), tol=1e-11).primal_value
            for eps in (0.05, 0.1, 0.3, 1.0, 3.0)
        ]

        for smaller, larger in zip(values, values[1:]):
            self.assertLessEqual(smaller, larger + 1e-9)

    def test_zero_weight_atoms_are_dropped(self):
        """Zero-weight atoms should be dropped and serialized as null potentials"""
        full = Problem(
            [
                DiscreteMeasure([[-0.8], [0.3], [0.1], [0.7]], [0.3, 0.0, 0.5, 0.2]),
                DiscreteMeasure([[-0.5], [0.0], [0.9]], [0.25, 0.25, 0.5]),
            ],
            [0.5, 0.5],
            1.0,
        )

        solution = sinkhorn_solve(full)
        reference = sinkhorn_solve(three_atom_problem())

        np.testing.assert_array_equal(solution.supports[0], [0, 2, 3])
        self.assertEqual(solution.original_shape, (4, 3))
        self.assertAlmostEqual(solution.primal_value, reference.primal_value, places=12)
        serialized = solution.to_dict()['potentials'][0]
        self.assertIsNone(serialized[1])
        self.assertAlmostEqual(serialized[2], float(reference.potentials[0][1]), places=12)

    def test_non_convergence_is_reported(self):
        """Hitting max_sweeps should be logged and flagged"""
        problem = three_marginal_problem(epsilon=0.05)

        with self.assertLogs('barycenters.solver.sinkhorn', level='WARNING') as logs:
            solution = sinkhorn_solve(problem, tol=1e-14, max_sweeps=2)

        self.assertFalse(solution.converged)
        self.assertEqual(solution.iterations, 2)
        self.assertEqual(len(solution.trace), 2)
        self.assertTrue(any('No convergence after 2 sweeps' in line for line in logs.output))

    def test_warm_start_from_solution(self):
        """Restarting from a solution should converge in one sweep"""
        problem = three_marginal_problem()
        solution = sinkhorn_solve(problem, tol=1e-10)

        restarted = sinkhorn_solve(problem, tol=1e-9, init=solution.potentials)

        self.assertEqual(restarted.iterations, 1)

    def test_warm_start_shape_mismatch(self):
        """A warm start of the wrong shape should be rejected"""
        with self.assertRaises(ValidationError):
            sinkhorn_solve(three_atom_problem(), init=PotentialVector.zeros((2, 3)))

    def test_invalid_tolerance(self):
        """Nonpositive tol and max_sweeps should be rejected"""
        with self.assertRaises(ValidationError):
            sinkhorn_solve(three_atom_problem(), tol=0.0)
        with self.assertRaises(ValidationError):
            sinkhorn_solve(three_atom_problem(), max_sweeps=0)

    def test_reruns_are_bitwise_identical(self):
        """Reruns should give bitwise identical potentials"""
        problem = three_marginal_problem()

        first = sinkhorn_solve(problem)
        second = sinkhorn_solve(problem)

        for a, b in zip(first.potentials.values, second.potentials.values):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(first.primal_value, second.primal_value)

    @override_settings(MSB_TENSOR_CAP=10, MSB_SLAB_ROWS=1)
    def test_lazy_cost_matches_dense(self):
        """Lazy and dense cost evaluation should give the same solution"""
        problem = three_marginal_problem()

        lazy = sinkhorn_solve(problem, tol=1e-11)
        with self.settings(MSB_TENSOR_CAP=2_000_000):
            dense = sinkhorn_solve(problem, tol=1e-11)

        for a, b in zip(lazy.potentials.values, dense.potentials.values):
            np.testing.assert_allclose(a, b, atol=1e-9)
        self.assertAlmostEqual(lazy.primal_value, dense.primal_value, places=10)


class DualTests(SimpleTestCase):
    """Test suite for the dual objective, its gradient and the induced coupling"""

    def test_gradient_matches_finite_differences(self):
        """The analytic gradient should match central differences"""
        problem = three_marginal_problem()
        rng = np.random.default_rng(2)
        f = PotentialVector(tuple(rng.uniform(-0.5, 0.5, n) for n in problem.shape))

        rows = finite_difference_check(problem, f, directions=20, seed=99)

        self.assertEqual(len(rows), 20)
        for row in rows:
            self.assertLess(row['relative_error'], 1e-5)

    def test_gradient_vanishes_at_the_optimum(self):
        """The gradient should vanish at a converged solution"""
        problem = three_atom_problem()
        solution = sinkhorn_solve(problem, tol=1e-12)

        for g in gradient(solution.potentials, problem).values:
            self.assertLess(float(np.max(np.abs(g))), 1e-11)

    def test_dual_at_zero_potentials(self):
        """Phi(0) = -eps * Z"""
        problem = three_atom_problem(epsilon=0.5)

        value = dual_objective([np.zeros(3), np.zeros(3)], problem)

        self.assertAlmostEqual(value, -0.5 * np.exp(log_partition(problem)), places=14)

    def test_shape_mismatch_is_rejected(self):
        """Potentials of the wrong shape should be rejected"""
        with self.assertRaises(ValidationError):
            dual_objective([np.zeros(3), np.zeros(2)], three_atom_problem())

    def test_translation_invariance(self):
        """Shifts summing to zero should not change the coupling"""
        problem = three_marginal_problem()
        solution = sinkhorn_solve(problem)

        shifted = shift_potentials(solution, [0.3, -0.1, -0.2])

        np.testing.assert_allclose(
            coupling_density(shifted, problem), coupling_density(solution, problem), rtol=1e-12,
        )

    def test_translation_must_sum_to_zero(self):
        """Shifts that do not sum to zero should be rejected"""
        solution = sinkhorn_solve(three_atom_problem())

        with self.assertRaisesMessage(ValidationError, 'sum to'):
            shift_potentials(solution, [0.3, 0.3])

    def test_single_entry_density_matches_tensor(self):
        """A single density entry should match the full tensor"""
        problem = three_marginal_problem()
        solution = sinkhorn_solve(problem)

        tensor = coupling_density(solution, problem)

        self.assertAlmostEqual(coupling_density(solution, problem, (3, 1, 4)), tensor[3, 1, 4], places=12)

    def test_density_index_out_of_range(self):
        """Out-of-range density indices should raise IndexError"""
        problem = three_atom_problem()
        solution = sinkhorn_solve(problem)

        with self.assertRaises(IndexError):
            coupling_density(solution, problem, (3, 0))

    @override_settings(MSB_ENUMERATION_CAP=5)
    def test_full_density_above_cap(self):
        """The full density above the enumeration cap should be refused"""
        problem = three_atom_problem()
        solution = sinkhorn_solve(problem)

        with self.assertRaises(CapacityError):
            coupling_density(solution, problem)

    def test_gibbs_kernel_identity(self):
        """S = eps KL(pi || kappa) - eps log Z"""
        problem = three_marginal_problem()
        solution = sinkhorn_solve(problem, tol=1e-10)

        rhs = gibbs_divergence(solution, problem) - problem.epsilon * log_partition(problem)

        self.assertAlmostEqual(solution.primal_value, rhs, delta=1e-8)
        self.assertGreaterEqual(gibbs_divergence(solution, problem), -1e-12)


class DiracDualTests(SimpleTestCase):
    """Hand-computed dual values for single atoms at 1 and -1 with epsilon 0.5, where c = 1"""

    def setUp(self):
        self.problem = Problem([DiscreteMeasure.dirac(1.0), DiscreteMeasure.dirac(-1.0)], [0.5, 0.5], 0.5)

    def test_dual_at_zero(self):
        """Phi(0) = -eps exp(-1 / eps)"""
        value = dual_objective([np.zeros(1), np.zeros(1)], self.problem)

        self.assertAlmostEqual(value, -0.5 * np.exp(-2.0), places=14)
        self.assertAlmostEqual(value, -0.0676676416, places=9)

    def test_dual_at_the_optimum(self):
        """Phi((0, 1)) should be 1 - eps = 0.5"""
        self.assertAlmostEqual(dual_objective([np.zeros(1), np.ones(1)], self.problem), 0.5, places=14)

    def test_gradient_at_zero(self):
        """Each component is 1 - exp(-1 / eps)"""
        zero = [np.zeros(1), np.zeros(1)]

        for g in gradient(zero, self.problem).values:
            self.assertAlmostEqual(float(g[0]), 1.0 - np.exp(-2.0), places=14)
        self.assertAlmostEqual(gradient_norm(zero, self.problem), np.sqrt(2.0) * (1.0 - np.exp(-2.0)), places=14)
        self.assertAlmostEqual(gradient_norm(zero, self.problem), 1.2228206, places=6)

    def test_gradient_vanishes_at_the_optimum(self):
        """The gradient should vanish at (0, 1)"""
        for g in gradient([np.zeros(1), np.ones(1)], self.problem).values:
            self.assertAlmostEqual(float(g[0]), 0.0, places=14)

    def test_solver_finds_the_optimum(self):
        """After normalizing f_1 to zero the optimum is f_2 = c = 1"""
        solution = sinkhorn_solve(self.problem)

        f, g = solution.potentials.values
        self.assertAlmostEqual(float(f[0]), 0.0, places=12)
        self.assertAlmostEqual(float(g[0]), 1.0, places=12)
        self.assertAlmostEqual(solution.dual_value, 0.5, places=12)


class RandomInstanceTests(SimpleTestCase):
    """Duality, feasibility and potential bounds over seeded random problems"""

    def test_random_suite(self):
        """Random problems should converge with the duality gap eps and bounded potentials"""
        rng = np.random.default_rng(2024)
        tol = 1e-9

        for trial in range(50):
            problem = random_problem(rng)
            with self.subTest(trial=trial, shape=problem.shape, epsilon=problem.epsilon):
                bound = cost_sup_bound(problem.alpha, problem.dimension, problem.m)

                solution = sinkhorn_solve(problem, tol=tol, max_sweeps=100_000)

                self.assertTrue(solution.converged)
                self.assertLessEqual(solution.marginal_residual, tol)
                self.assertAlmostEqual(
                    solution.primal_value - solution.dual_value,
                    problem.epsilon,
                    delta=1e-8 * max(1.0, abs(solution.dual_value)),
                )
                self.assertLessEqual(max(solution.potentials.sup_norms()), bound + 10 * tol)
                self.assertLessEqual(sum_sup_norm(solution.potentials), 2 * bound + 10 * tol)

    def test_two_marginal_potentials_match_textbook_iterations(self):
        """Normalized potentials should match those of the textbook iterations"""
        rng = np.random.default_rng(77)

        for trial in range(20):
            problem = random_problem(rng, m=2, epsilons=(0.5, 1.0, 2.0))
            with self.subTest(trial=trial, shape=problem.shape, epsilon=problem.epsilon):
                f, g = naive_potentials(problem)

                solution = sinkhorn_solve(problem, tol=1e-12)

                self.assertTrue(solution.converged)
                np.testing.assert_allclose(solution.potentials[0], f, atol=1e-10)
                np.testing.assert_allclose(solution.potentials[1], g, atol=1e-10)
