import numpy as np
from django.test import SimpleTestCase, override_settings

from barycenters.barycenter import (
    BarycenterMeasure,
    compute_barycenter,
    coupling_expectation,
    integrate,
    pushforward_coupling,
)
from barycenters.cost import t_alpha
from barycenters.exceptions import CapacityError, NonConvergenceError
from barycenters.measures import DiscreteMeasure, Problem
from barycenters.observables import build_test_function, coupling_observable
from barycenters.solver import coupling_weights, primal_terms, sinkhorn_solve, solved_problem


def random_problem(seed=5, sizes=(3, 3), alpha=(0.4, 0.6), epsilon=0.5, dimension=1):
    rng = np.random.default_rng(seed)
    marginals = []
    for n in sizes:
        weights = rng.uniform(0.2, 1.0, n)
        marginals.append(DiscreteMeasure(rng.uniform(-1, 1, size=(n, dimension)), weights / weights.sum()))
    return Problem(marginals, list(alpha), epsilon)


class ComputeBarycenterTests(SimpleTestCase):
    """Test suite for pushing the coupling through the barycentric map"""

    def test_dirac_marginals(self):
        """Single atoms give a Dirac at sum alpha_j x_j"""
        problem = Problem(
            [DiscreteMeasure.dirac(0.2), DiscreteMeasure.dirac(-0.4), DiscreteMeasure.dirac(0.9)],
            [0.2, 0.3, 0.5],
            0.3,
        )
        solution = sinkhorn_solve(problem)

        barycenter = compute_barycenter(solution, problem)

        self.assertEqual(barycenter.size, 1)
        self.assertAlmostEqual(float(barycenter.points[0, 0]), 0.37, places=14)
        self.assertAlmostEqual(float(barycenter.weights[0]), 1.0, places=12)
        square = build_test_function({'family': 'monomial', 'degree': 2})
        self.assertAlmostEqual(integrate(barycenter, square), 0.37 ** 2, places=12)

    def test_one_hot_alpha_gives_first_marginal(self):
        """With alpha = (1, 0) the barycenter is the first marginal atom for atom"""
        first = DiscreteMeasure([[-0.6], [0.0], [0.3], [0.8]], [0.1, 0.4, 0.3, 0.2])
        second = DiscreteMeasure([[-0.9], [0.5]], [0.7, 0.3])
        problem = Problem([first, second], [1.0, 0.0], 0.2)
        solution = sinkhorn_solve(problem)

        barycenter = compute_barycenter(solution, problem)

        np.testing.assert_array_equal(barycenter.points, first.points)
        np.testing.assert_allclose(barycenter.weights, first.weights, atol=1e-8)

    def test_weights_match_brute_force_pushforward(self):
        """Barycenter weights should match the pushforward of the full coupling tensor"""
        problem = random_problem()
        solution = sinkhorn_solve(problem)
        tensor = coupling_weights(solution, problem)
        expected = sorted(
            (float(t_alpha([problem.marginals[0].points[i], problem.marginals[1].points[j]], problem.alpha)[0]),
             float(tensor[i, j]))
            for i in range(3) for j in range(3)
        )

        barycenter = compute_barycenter(solution, problem)

        self.assertEqual(barycenter.size, 9)
        np.testing.assert_allclose(barycenter.points[:, 0], [p for p, _ in expected], atol=1e-15)
        np.testing.assert_allclose(barycenter.weights, [w for _, w in expected], atol=1e-12)

    def test_mass_and_support(self):
        """Every coupling entry should map to one atom inside the cube"""
        problem = random_problem(seed=9, sizes=(4, 3, 2), alpha=(0.2, 0.3, 0.5), dimension=2)
        solution = sinkhorn_solve(problem)

        barycenter = compute_barycenter(solution, problem, consolidate=False)

        self.assertEqual(barycenter.size, 24)
        self.assertTrue(np.all(np.abs(barycenter.points) <= 1.0))
        self.assertTrue(np.all(barycenter.weights >= 0))
        self.assertAlmostEqual(float(barycenter.weights.sum()), 1.0, delta=1e-8)

    def test_provenance(self):
        """The barycenter should carry the problem hash and epsilon and survive a dict round trip"""
        problem = random_problem()
        solution = sinkhorn_solve(problem)

        barycenter = compute_barycenter(solution, problem)

        self.assertEqual(barycenter.problem_hash, problem.fingerprint())
        self.assertEqual(barycenter.epsilon, 0.5)
        restored = BarycenterMeasure.from_dict(barycenter.to_dict())
        self.assertEqual(restored.problem_hash, barycenter.problem_hash)
        np.testing.assert_array_equal(restored.weights, barycenter.weights)

    def test_unconverged_solution_is_refused(self):
        """A non-converged solution should not produce a barycenter"""
        problem = random_problem(epsilon=0.01)
        solution = sinkhorn_solve(problem, tol=1e-14, max_sweeps=1)

        with self.assertRaises(NonConvergenceError):
            compute_barycenter(solution, problem)

    @override_settings(MSB_ENUMERATION_CAP=5)
    def test_enumeration_cap(self):
        """Couplings above the enumeration cap should be refused"""
        problem = random_problem()
        solution = sinkhorn_solve(problem)

        with self.assertRaisesMessage(CapacityError, 'above the cap of 5'):
            compute_barycenter(solution, problem)


class IntegrateTests(SimpleTestCase):
    """Test suite for integrals against discrete measures"""

    def test_constant_integrates_to_one(self):
        """The constant function should integrate to the total mass"""
        measure = DiscreteMeasure([[-0.5], [0.25], [0.75]], [0.2, 0.3, 0.5])

        self.assertAlmostEqual(integrate(measure, build_test_function('constant')), 1.0, places=15)

    def test_identity_on_dirac(self):
        """The identity should return the location of a single atom"""
        self.assertEqual(integrate(DiscreteMeasure.dirac(0.4), build_test_function('monomial')), 0.4)

    def test_arbitrary_callable(self):
        """Any vectorized callable should be accepted as a test function"""
        measure = DiscreteMeasure([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])

        value = integrate(measure, lambda points: points.sum(axis=1) ** 2)

        self.assertAlmostEqual(value, 1.0, places=15)


class CouplingExpectationTests(SimpleTestCase):
    """Test suite for expectations under the optimal coupling"""

    def setUp(self):
        self.problem = random_problem(seed=12, sizes=(3, 4), alpha=(0.5, 0.5), epsilon=0.4)
        self.solution = sinkhorn_solve(self.problem)

    def test_constant_has_unit_mass(self):
        """The coupling should have unit mass"""
        value = coupling_expectation(self.solution, self.problem, lambda tuples: np.ones(tuples.shape[0]))

        self.assertAlmostEqual(value, 1.0, delta=1e-8)

    def test_cost_observable_is_the_transport_term(self):
        """The cost observable should equal the transport part of the primal value"""
        transport, _, _ = primal_terms(self.solution.potentials, solved_problem(self.solution, self.problem))
        cost = coupling_observable(build_test_function('cost'), self.problem.alpha)

        value = coupling_expectation(self.solution, self.problem, cost)

        self.assertAlmostEqual(value, transport, delta=1e-12)
        self.assertLess(value, self.solution.primal_value + 1e-12)

    def test_pushforward_identity(self):
        """pi(h o T_alpha) equals the barycenter integral of h for every built-in family"""
        barycenter = compute_barycenter(self.solution, self.problem)
        specs = [
            {'family': 'monomial', 'degree': 3},
            {'family': 'cosine', 'k': 2.5, 'b': 0.3},
            {'family': 'ramp', 'slope': 3.0, 'offset': 0.1},
            {'family': 'constant', 'value': -2.0},
        ]

        for spec in specs:
            h = build_test_function(spec)
            with self.subTest(family=spec['family']):
                self.assertAlmostEqual(
                    coupling_expectation(self.solution, self.problem, coupling_observable(h, self.problem.alpha)),
                    integrate(barycenter, h),
                    delta=1e-10,
                )


class PushforwardCouplingTests(SimpleTestCase):
    """Test suite for pushing sparse couplings through the barycentric map"""

    def test_sparse_coupling(self):
        """A sparse coupling should push forward only its listed tuples"""
        problem = Problem(
            [DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5]), DiscreteMeasure([[0.0], [0.5]], [0.5, 0.5])],
            [0.5, 0.5],
            1.0,
        )

        measure = pushforward_coupling([((0, 0), 0.5), ((1, 1), 0.5)], problem)

        np.testing.assert_allclose(measure.points[:, 0], [-0.5, 0.75])
        np.testing.assert_allclose(measure.weights, [0.5, 0.5])

    def test_coincident_images_are_merged(self):
        """Tuples with the same image should merge into one atom"""
        problem = Problem(
            [DiscreteMeasure([[-0.5], [0.5]], [0.5, 0.5]), DiscreteMeasure([[-0.5], [0.5]], [0.5, 0.5])],
            [0.5, 0.5],
            1.0,
        )

        measure = pushforward_coupling([((0, 1), 0.5), ((1, 0), 0.5)], problem)

        self.assertEqual(measure.size, 1)
        self.assertEqual(float(measure.points[0, 0]), 0.0)
        self.assertAlmostEqual(float(measure.weights[0]), 1.0, places=15)
