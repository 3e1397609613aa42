""" Tests for rate-distortion problems, the minimization-free solver and the em baselines """
import math
import warnings

import numpy as np
from django.test import SimpleTestCase

from ..core import MixtureFamily, e_project, mixture_to_natural
from ..exceptions import ConvergenceError, InvalidArgumentError
from ..ratedistortion import (
    ClippedDivergenceFamily,
    RdProblem,
    binary_rate_distortion,
    build_rd_basis,
    conditional_from_joint,
    em_objective_general,
    em_solve,
    em_solve_newton,
    eta_from_joint,
    expected_distortion,
    f_hat,
    joint_from_eta,
    kl_divergence,
    m_project_product,
    mutual_information,
    natural_head,
    rd_divergence_family,
    rd_objective,
    rd_objective_for,
    rd_omega,
    rd_solve_minfree,
    rd_solve_mirror,
    rd_system,
    schedule_f1,
    schedule_f2,
    tilted_channel,
    tilted_start,
)
from ..solver import SolverConfig, Termination, ab_step, estimate_gamma, objective_value
from .test_utils import (
    OPTIMAL_OBJECTIVE,
    binary_entropy,
    binary_oracle,
    bundled_problem,
    channel_oracle,
    check_channel,
    finite_difference,
    hamming_problem,
    interior_problem,
    optimal_channel,
    random_problem,
)

EPSILON = 1e-4


def optimal_eta(problem, basis):
    return eta_from_joint(basis, problem.p_x[:, None] * optimal_channel())


class RdProblemTest(SimpleTestCase):
    """Tests for instance validation"""

    def test_valid(self):
        problem = bundled_problem()
        self.assertEqual((problem.d1, problem.d2, problem.d0), (3, 3, 5))

    def test_p_x_must_sum_to_one(self):
        with self.assertRaisesMessage(InvalidArgumentError, "p_x must sum to 1"):
            RdProblem(np.array([0.5, 0.3, 0.3]), bundled_problem().distortion, 1.5)

    def test_p_x_must_be_positive(self):
        with self.assertRaises(InvalidArgumentError):
            RdProblem(np.array([1.0, 0.0]), np.array([[0.0, 1.0], [1.0, 0.0]]), 0.5)

    def test_level_outside_range(self):
        """c must lie strictly between the smallest and largest achievable distortion"""
        for level in (-0.1, 0.0, 1.0, 1.2):
            with self.assertRaisesMessage(InvalidArgumentError, "c must lie strictly between"):
                hamming_problem(level)

    def test_degenerate_last_row(self):
        distortion = np.array([[0.0, 1.0], [1.0, 1.0]])
        with self.assertRaises(InvalidArgumentError):
            RdProblem(np.array([0.5, 0.5]), distortion, 0.7)

    def test_single_column(self):
        with self.assertRaises(InvalidArgumentError):
            RdProblem(np.array([1.0]), np.array([[0.5]]), 0.5)

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            RdProblem(np.array([0.5, 0.5]), np.array([[0.0, 1.0, 2.0]]), 0.5)

    def test_error_names_field(self):
        hamming = np.array([[0.0, 1.0], [1.0, 0.0]])
        cases = (
            ("p_x", (np.array([1.0, 0.0]), hamming, 0.5)),
            ("distortion", (np.array([0.5, 0.5]), np.array([[0.0, 1.0], [1.0, 1.0]]), 0.7)),
            ("distortion", (np.array([0.5, 0.5]), np.array([[0.0, np.inf], [1.0, 0.0]]), 0.5)),
            ("c", (np.array([0.5, 0.5]), hamming, 1.0)),
        )
        for field, args in cases:
            with self.assertRaises(InvalidArgumentError) as caught:
                RdProblem(*args)
            self.assertEqual(caught.exception.field, field)


class RdBasisTest(SimpleTestCase):
    """Tests for the free cells and their duals"""

    def setUp(self):
        self.rng = np.random.default_rng(41)

    def test_dimension(self):
        self.assertEqual(build_rd_basis(bundled_problem()).d0, 5)
        self.assertEqual(build_rd_basis(random_problem(self.rng, 4, 3)).d0, 7)

    def test_identities(self):
        """Biorthogonality, zero expected distortion and zero row sums of every dual"""
        for problem in (bundled_problem(), random_problem(self.rng, 3, 4)):
            basis = build_rd_basis(problem)
            np.testing.assert_allclose(
                basis.features @ basis.duals.T, np.eye(basis.d0), atol=1e-10
            )
            tables = basis.duals.reshape(-1, problem.d1, problem.d2)
            np.testing.assert_allclose(
                np.tensordot(tables, problem.distortion, axes=2), 0.0, atol=1e-10
            )
            np.testing.assert_allclose(tables.sum(axis=2), 0.0, atol=1e-10)

    def test_hamming_dual(self):
        """The single 2x2 dual solves the biorthogonality system"""
        problem = hamming_problem(0.2)
        system = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],  # pairs with the free cell
                [1.0, 1.0, 0.0, 0.0],  # first row sum
                [0.0, 0.0, 1.0, 1.0],  # second row sum
                problem.distortion.ravel(),
            ]
        )
        expected = np.linalg.solve(system, [1.0, 0.0, 0.0, 0.0])
        basis = build_rd_basis(problem)
        np.testing.assert_allclose(basis.duals[0], expected, atol=1e-14)
        np.testing.assert_allclose(expected.reshape(2, 2), [[1.0, -1.0], [1.0, -1.0]])


class JointTableTest(SimpleTestCase):
    """Tests for the affine map from free cells to joint tables"""

    def setUp(self):
        self.rng = np.random.default_rng(43)
        self.problem = bundled_problem()
        self.basis = build_rd_basis(self.problem)

    def test_round_trip(self):
        """Free cells of a joint table meeting the constraints reproduce it"""
        problem = hamming_problem(0.2)
        basis = build_rd_basis(problem)
        # W(1|0) = 0.1 and W(0|1) = 0.3 give expected distortion 0.2
        joint = np.array([[0.45, 0.05], [0.15, 0.35]])
        np.testing.assert_allclose(
            joint_from_eta(problem, basis, eta_from_joint(basis, joint)), joint, atol=1e-15
        )

    def test_identities_hold_for_infeasible_points(self):
        for _ in range(10):
            eta = self.rng.normal(scale=2.0, size=self.basis.d0)
            joint = joint_from_eta(self.problem, self.basis, eta)
            np.testing.assert_allclose(joint.sum(axis=1), self.problem.p_x, atol=1e-12)
            self.assertAlmostEqual(
                float(np.sum(joint * self.problem.distortion)), self.problem.level, delta=1e-10
            )
        far = joint_from_eta(self.problem, self.basis, np.full(self.basis.d0, 3.0))
        self.assertLess(far.min(), 0.0)

    def test_optimal_channel(self):
        joint = self.problem.p_x[:, None] * optimal_channel()
        eta = eta_from_joint(self.basis, joint)
        np.testing.assert_allclose(joint_from_eta(self.problem, self.basis, eta), joint, atol=1e-6)
        np.testing.assert_allclose(
            conditional_from_joint(self.problem, joint), optimal_channel(), atol=1e-15
        )

    def test_negative_mass(self):
        """Negative cell mass bounds the negative mass of the column sums"""
        center = optimal_eta(self.problem, self.basis)
        checked = 0
        for _ in range(50):
            joint = joint_from_eta(
                self.problem, self.basis, center + self.rng.normal(scale=0.3, size=5)
            )
            if joint.min() >= 0:
                continue
            checked += 1
            columns = joint.sum(axis=0)
            self.assertGreaterEqual(
                -joint[joint < 0].sum(), -columns[columns < 0].sum() - 1e-12
            )
        self.assertGreater(checked, 0)


class RdObjectiveTest(SimpleTestCase):
    """Tests for the clipped objective, its Omega map and the information measures"""

    def setUp(self):
        self.rng = np.random.default_rng(47)
        self.problem = bundled_problem()
        self.basis = build_rd_basis(self.problem)
        self.eta = optimal_eta(self.problem, self.basis)

    def test_optimal_value(self):
        self.assertAlmostEqual(
            rd_objective(self.problem, self.basis, EPSILON, self.eta), OPTIMAL_OBJECTIVE, delta=1e-4
        )

    def test_product_joint(self):
        """A product joint table has zero objective and zero Omega"""
        problem = hamming_problem(0.5)
        basis = build_rd_basis(problem)
        eta = np.array([0.25])
        np.testing.assert_allclose(joint_from_eta(problem, basis, eta), np.full((2, 2), 0.25))
        self.assertAlmostEqual(rd_objective(problem, basis, EPSILON, eta), 0.0, delta=1e-12)
        np.testing.assert_allclose(rd_omega(problem, basis, EPSILON, eta), 0.0, atol=1e-12)

    def test_matches_mutual_information(self):
        for _ in range(5):
            eta = self.eta + self.rng.normal(scale=0.005, size=5)
            joint = joint_from_eta(self.problem, self.basis, eta)
            self.assertGreater(joint.min(), EPSILON)
            self.assertAlmostEqual(
                rd_objective(self.problem, self.basis, EPSILON, eta),
                mutual_information(self.problem.p_x, conditional_from_joint(self.problem, joint)),
                places=12,
            )

    def test_omega_is_gradient(self):
        """On interior points Omega of the free cells is the gradient of the objective"""
        for _ in range(5):
            eta = self.eta + self.rng.normal(scale=0.005, size=5)
            np.testing.assert_allclose(
                rd_omega(self.problem, self.basis, EPSILON, eta)[:5],
                finite_difference(
                    lambda point: rd_objective(self.problem, self.basis, EPSILON, point), eta
                ),
                atol=1e-4,
            )

    def test_omega_pairs_to_objective(self):
        omega = rd_omega(self.problem, self.basis, EPSILON, self.eta)
        self.assertEqual(omega.shape, (6,))
        self.assertAlmostEqual(
            self.eta @ omega[:5] + omega[5],
            rd_objective(self.problem, self.basis, EPSILON, self.eta),
            places=12,
        )

    def test_stationary_at_optimum(self):
        omega = rd_omega(self.problem, self.basis, EPSILON, self.eta)
        self.assertLess(np.linalg.norm(omega[:5]), 1e-3)

    def test_clipping_consistency(self):
        """Changing epsilon does not matter when every entry is far above it"""
        for epsilon in (1e-5, 1e-3):
            self.assertAlmostEqual(
                rd_objective(self.problem, self.basis, epsilon, self.eta),
                rd_objective(self.problem, self.basis, epsilon * 10, self.eta),
                delta=1e-12,
            )

    def test_clipped_value_is_finite(self):
        eta = np.full(5, 3.0)
        self.assertTrue(math.isfinite(rd_objective(self.problem, self.basis, EPSILON, eta)))
        self.assertTrue(np.all(np.isfinite(rd_omega(self.problem, self.basis, EPSILON, eta))))

    def test_mutual_information(self):
        p_x = np.array([0.2, 0.5, 0.3])
        identical = np.tile([0.1, 0.6, 0.3], (3, 1))
        self.assertAlmostEqual(mutual_information(p_x, identical), 0.0, places=14)
        self.assertAlmostEqual(mutual_information(np.full(3, 1 / 3), np.eye(3)), math.log(3.0))
        self.assertAlmostEqual(
            mutual_information(self.problem.p_x, optimal_channel()), OPTIMAL_OBJECTIVE, delta=1e-5
        )

    def test_expected_distortion(self):
        self.assertEqual(expected_distortion(self.problem.p_x, optimal_channel(), np.zeros((3, 3))), 0.0)
        self.assertAlmostEqual(
            expected_distortion(self.problem.p_x, optimal_channel(), self.problem.distortion),
            1.5,
            delta=1e-4,
        )
        self.assertAlmostEqual(
            expected_distortion([0.5, 0.5], np.full((2, 2), 0.5), [[0.0, 1.0], [1.0, 0.0]]), 0.5
        )

    def test_binary_rate_distortion(self):
        self.assertAlmostEqual(binary_rate_distortion(0.1), 0.368064, delta=1e-6)
        self.assertAlmostEqual(binary_rate_distortion(0.5), 0.0, places=14)


class MProjectionTest(SimpleTestCase):
    """Tests for the product-of-marginals projection and the general clipped objective"""

    def setUp(self):
        self.problem = bundled_problem()
        self.basis = build_rd_basis(self.problem)

    def test_product_is_fixed(self):
        joint = np.outer([0.2, 0.8], [0.3, 0.3, 0.4])
        np.testing.assert_allclose(m_project_product(joint), joint, atol=1e-15)

    def test_divergence_to_projection(self):
        joint = self.problem.p_x[:, None] * optimal_channel()
        projected = m_project_product(joint)
        np.testing.assert_allclose(projected.sum(axis=1), self.problem.p_x)
        self.assertAlmostEqual(kl_divergence(joint, projected), OPTIMAL_OBJECTIVE, delta=1e-4)

    def test_negative_entries(self):
        joint = joint_from_eta(self.problem, self.basis, np.full(5, 3.0))
        self.assertLess(joint.min(), 0.0)
        projected = m_project_product(joint)
        for x in range(3):
            for y in range(3):
                self.assertAlmostEqual(
                    projected[x, y], self.problem.p_x[x] * sum(joint[:, y]), places=12
                )

    def test_general_objective_vanishes_on_products(self):
        problem = hamming_problem(0.5)
        family, m_projection = rd_divergence_family(problem, build_rd_basis(problem))
        self.assertEqual(em_objective_general(family, m_projection, EPSILON, [0.25]), 0.0)

    def test_general_objective_matches_rate_distortion(self):
        rng = np.random.default_rng(53)
        family, m_projection = rd_divergence_family(self.problem, self.basis)
        center = optimal_eta(self.problem, self.basis)
        for _ in range(5):
            eta = center + rng.normal(scale=0.005, size=5)
            self.assertAlmostEqual(
                em_objective_general(family, m_projection, EPSILON, eta),
                rd_objective(self.problem, self.basis, EPSILON, eta),
                delta=1e-10,
            )

    def test_general_objective_clips_small_entries(self):
        """Entries below epsilon contribute through the clipped logarithm"""
        problem = hamming_problem(0.1)
        family, m_projection = rd_divergence_family(problem, build_rd_basis(problem))
        # joint [[0.5, 0], [0.1, 0.4]] with marginal product [[0.3, 0.2], [0.3, 0.2]]
        expected = (
            0.5 * math.log(0.5 / 0.3) + 0.1 * math.log(0.1 / 0.3) + 0.4 * math.log(0.4 / 0.2)
        )
        self.assertAlmostEqual(
            em_objective_general(family, m_projection, EPSILON, [0.5]), expected, places=12
        )

    def test_custom_family(self):
        """A one-cell family over a 2x2 table with an independence projection"""
        family = ClippedDivergenceFamily(
            duals=np.array([[1.0, -1.0, -1.0, 1.0]]), offset=np.array([0.0, 0.5, 0.5, 0.0])
        )
        np.testing.assert_allclose(family.table([0.25]), np.full(4, 0.25))

        def m_projection(table):
            return m_project_product(np.reshape(table, (2, 2))).ravel()

        self.assertAlmostEqual(em_objective_general(family, m_projection, EPSILON, [0.25]), 0.0)
        self.assertGreater(em_objective_general(family, m_projection, EPSILON, [0.4]), 0.0)


class MinfreeTest(SimpleTestCase):
    """Tests for the minimization-free Arimoto-Blahut solver on rate-distortion problems"""

    def test_bundled_instance(self):
        problem = bundled_problem()
        result = rd_solve_minfree(problem, SolverConfig(gamma=50.0), epsilon=EPSILON)
        self.assertEqual(result.termination, Termination.TOLERANCE)
        self.assertAlmostEqual(result.objective, OPTIMAL_OBJECTIVE, delta=1e-4)
        np.testing.assert_allclose(result.details["channel"], optimal_channel(), atol=1e-3)
        check_channel(self, problem, result.details["channel"], tol=1e-4)
        self.assertGreaterEqual(result.details["joint"].min(), EPSILON)
        self.assertEqual(result.details["start"], "tilted")
        start_inner = result.details["start_inner"]
        self.assertGreater(start_inner, 0)
        self.assertEqual(result.details["cumulative_inner"], result.iterations + start_inner)
        self.assertEqual(result.trace.rows[0].cumulative_inner, start_inner)
        self.assertEqual(result.trace.rows[-1].cumulative_inner, result.iterations + start_inner)

    def test_tilted_start(self):
        """The start is the first em channel, positive and on the constraints"""
        problem = bundled_problem()
        joint, iterations = tilted_start(problem)
        self.assertGreater(iterations, 0)
        self.assertGreater(joint.min(), 0.0)
        np.testing.assert_allclose(joint.sum(axis=1), problem.p_x, atol=1e-12)
        self.assertAlmostEqual(float(np.sum(joint * problem.distortion)), problem.level, delta=1e-8)
        first = em_solve(problem, SolverConfig(max_iterations=1))
        np.testing.assert_allclose(conditional_from_joint(problem, joint), first.details["channel"])

        result = rd_solve_minfree(problem, SolverConfig(max_iterations=1, objective_tolerance=0.0))
        self.assertAlmostEqual(result.trace.rows[0].objective, first.objective, delta=1e-8)

    def test_zero_start(self):
        """theta = 0 starts off the simplex on the bundled instance and still reaches the optimum"""
        result = rd_solve_minfree(
            bundled_problem(), SolverConfig(gamma=50.0), theta_init=np.zeros(5)
        )
        self.assertLess(result.trace.rows[0].min_entry, 0.0)
        self.assertEqual(result.termination, Termination.TOLERANCE)
        self.assertAlmostEqual(result.objective, OPTIMAL_OBJECTIVE, delta=1e-4)
        self.assertGreaterEqual(result.details["joint"].min(), EPSILON)
        self.assertEqual(result.details["start"], "given")
        self.assertEqual(result.details["start_inner"], 0)
        self.assertEqual(result.details["cumulative_inner"], result.iterations)

    def test_gamma_condition_certifies_descent(self):
        """Every step that passes the gamma-condition check does not increase the objective"""
        for theta_init in (None, np.zeros(5)):
            result = rd_solve_minfree(
                bundled_problem(),
                SolverConfig(gamma=50.0, max_iterations=500),
                theta_init=theta_init,
            )
            rows = result.trace.rows
            self.assertGreater(len(rows), 2)
            self.assertTrue(any(row.gamma_condition for row in rows[1:]))
            for previous, row in zip(rows, rows[1:]):
                if row.gamma_condition:
                    self.assertLessEqual(row.objective, previous.objective + 1e-10)

    def test_tilted_trace_is_monotone(self):
        result = rd_solve_minfree(bundled_problem(), SolverConfig(gamma=50.0))
        self.assertTrue(np.all(np.diff(result.trace.objectives) <= 1e-10))
        self.assertTrue(all(row.min_entry >= EPSILON for row in result.trace))

    def test_one_step_reduces_objective(self):
        problem = bundled_problem()
        basis = build_rd_basis(problem)
        system = rd_system(basis)
        family = MixtureFamily(free_count=5, constants=[1.0])
        objective = rd_objective_for(problem, basis, EPSILON, system)
        joint, _ = tilted_start(problem)
        start = e_project(system, family, np.append(natural_head(problem, basis, joint), 0.0))
        np.testing.assert_allclose(
            system.gradient(start)[:5], eta_from_joint(basis, joint), atol=1e-12
        )
        stepped = ab_step(system, family, objective, 50.0, start)
        self.assertLess(
            objective_value(system, objective, stepped), objective_value(system, objective, start)
        )

    def test_binary_hamming(self):
        for level in (0.1, 0.25, 0.49):
            result = rd_solve_minfree(hamming_problem(level), SolverConfig(gamma=50.0))
            self.assertAlmostEqual(result.objective, binary_rate_distortion(level), delta=1e-4)
        self.assertAlmostEqual(binary_rate_distortion(0.1), 0.368064, delta=1e-6)

    def test_invalid_arguments(self):
        problem = bundled_problem()
        with self.assertRaises(InvalidArgumentError):
            rd_solve_minfree(problem, SolverConfig(), epsilon=0.0)
        with self.assertRaises(InvalidArgumentError):
            rd_solve_minfree(problem, SolverConfig(), theta_init=np.zeros(4))

    def test_entry_below_epsilon_raises(self):
        """
        From theta = 0 the skewed binary source settles on a table with negative
        mass; the result comes back attached to the error
        """
        problem = hamming_problem(0.15, p_x=(0.7, 0.3))
        with self.assertRaises(ConvergenceError) as caught:
            rd_solve_minfree(problem, SolverConfig(gamma=50.0), theta_init=np.zeros(1))
        self.assertIn("below epsilon", str(caught.exception))
        partial = caught.exception.partial
        self.assertEqual(partial.termination, Termination.ERROR)
        self.assertLess(partial.details["joint"].min(), EPSILON)
        self.assertLess(partial.objective, 0.0)
        self.assertGreater(len(partial.trace), 1)

    def test_unused_output_raises(self):
        """Optima that leave an output unused are out of reach of the clipped objective"""
        for distortion, level in (
            ([[0.0, 1.0, 5.0], [1.0, 0.0, 5.0]], 0.2),
            ([[0.0, 1.0, 0.4], [1.0, 0.0, 0.4]], 0.25),
        ):
            problem = RdProblem(np.array([0.5, 0.5]), np.array(distortion), level)
            with self.assertRaises(ConvergenceError) as caught:
                rd_solve_minfree(problem, SolverConfig(gamma=50.0))
            self.assertEqual(caught.exception.partial.termination, Termination.ERROR)
            self.assertGreater(em_solve(problem, SolverConfig()).objective, 0.1)

    def test_random_interior_instances(self):
        """em, both em-newton schedules and minfree agree on instances with interior optima"""
        rng = np.random.default_rng(71)
        for index in range(20):
            problem = interior_problem(rng, 3 + index % 2)
            exact = em_solve(problem, SolverConfig())
            for schedule in (schedule_f1, schedule_f2):
                scheduled = em_solve_newton(problem, SolverConfig(), schedule=schedule)
                self.assertAlmostEqual(scheduled.objective, exact.objective, delta=2e-4)
            minfree = rd_solve_minfree(problem, SolverConfig(gamma=50.0))
            self.assertEqual(minfree.termination, Termination.TOLERANCE)
            self.assertAlmostEqual(minfree.objective, exact.objective, delta=2e-4)
            self.assertGreaterEqual(minfree.details["joint"].min(), EPSILON)
            check_channel(self, problem, minfree.details["channel"], tol=1e-6)

    def test_gamma_estimate_near_optimum(self):
        """Sampled gamma-condition ratios around the optimum are finite"""
        rng = np.random.default_rng(67)
        problem = bundled_problem()
        basis = build_rd_basis(problem)
        system = rd_system(basis)
        family = MixtureFamily(free_count=5, constants=[1.0])
        objective = rd_objective_for(problem, basis, EPSILON, system)
        center = mixture_to_natural(system, np.append(optimal_eta(problem, basis), 1.0))
        pairs = [
            (
                e_project(system, family, center + rng.normal(scale=0.05, size=6)),
                e_project(system, family, center + rng.normal(scale=0.05, size=6)),
            )
            for _ in range(20)
        ]
        estimate = estimate_gamma(system, objective, pairs)
        self.assertTrue(math.isfinite(estimate))
        self.assertGreater(estimate, 0.0)

    def test_mirror_matches_minfree(self):
        """Mirror descent with step 1/gamma follows the same iterates"""
        problem = hamming_problem(0.15, p_x=(0.7, 0.3))
        config = SolverConfig(gamma=50.0, max_iterations=3, objective_tolerance=0.0)
        minfree = rd_solve_minfree(problem, config)
        mirror = rd_solve_mirror(problem, config)
        self.assertEqual(len(mirror.trace), len(minfree.trace))
        for left, right in zip(minfree.trace.thetas, mirror.trace.thetas):
            np.testing.assert_allclose(left, right, atol=1e-7)
        self.assertEqual(mirror.details["cumulative_inner"], minfree.details["cumulative_inner"])

    def test_mirror_guard(self):
        with self.assertRaises(ConvergenceError) as caught:
            rd_solve_mirror(
                hamming_problem(0.15, p_x=(0.7, 0.3)),
                SolverConfig(gamma=50.0),
                theta_init=np.zeros(1),
            )
        self.assertIn("mirror", str(caught.exception))


class FHatTest(SimpleTestCase):
    """Tests for the one-variable multiplier function"""

    def setUp(self):
        self.problem = bundled_problem()
        self.p_y = np.full(3, 1 / 3)

    def test_zero(self):
        value, mean, _ = f_hat(self.problem.p_x, self.p_y, self.problem.distortion, 1.5, 0.0)
        self.assertAlmostEqual(value, 0.0, places=14)
        expected = 1.5 - self.problem.p_x @ self.problem.distortion.mean(axis=1)
        self.assertAlmostEqual(mean, expected, places=14)

    def test_constant_distortion(self):
        for tau in (-2.0, 0.3, 5.0):
            value, mean, variance = f_hat(
                self.problem.p_x, self.p_y, np.full((3, 3), 1.5), 1.5, tau
            )
            self.assertAlmostEqual(value, 0.0, places=14)
            self.assertAlmostEqual(mean, 0.0, places=14)
            self.assertAlmostEqual(variance, 0.0, places=14)

    def test_direct_summation(self):
        tau = 0.5
        expected = sum(
            self.problem.p_x[x]
            * math.log(
                sum(
                    self.p_y[y] * math.exp(tau * (1.5 - self.problem.distortion[x, y]))
                    for y in range(3)
                )
            )
            for x in range(3)
        )
        value, _, _ = f_hat(self.problem.p_x, self.p_y, self.problem.distortion, 1.5, tau)
        self.assertAlmostEqual(value, expected, places=13)

    def test_derivatives(self):
        p_y = np.array([0.2, 0.5, 0.3])

        def evaluate(index):
            return lambda tau: f_hat(
                self.problem.p_x, p_y, self.problem.distortion, 1.5, tau[0]
            )[index]

        for tau in (-1.0, 0.2, 1.7):
            point = np.array([tau])
            _, mean, variance = f_hat(self.problem.p_x, p_y, self.problem.distortion, 1.5, tau)
            self.assertAlmostEqual(mean, finite_difference(evaluate(0), point)[0], places=7)
            self.assertAlmostEqual(variance, finite_difference(evaluate(1), point)[0], places=7)
            self.assertGreater(variance, 0.0)

    def test_tilted_channel(self):
        channel = tilted_channel(self.p_y, self.problem.distortion, 0.7, -1.0)
        np.testing.assert_allclose(channel.sum(axis=1), 1.0)
        expected = np.exp(-0.7 * self.problem.distortion[0])
        np.testing.assert_allclose(channel[0], expected / expected.sum())

    def test_zero_marginal_entry(self):
        """An output with zero probability drops out without numpy warnings"""
        p_y = np.array([0.4, 0.6, 0.0])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            values = f_hat(self.problem.p_x, p_y, self.problem.distortion, 1.5, 0.8)
            channel = tilted_channel(p_y, self.problem.distortion, 0.8, -1.0)
        expected = f_hat(self.problem.p_x, p_y[:2], self.problem.distortion[:, :2], 1.5, 0.8)
        np.testing.assert_allclose(values, expected, rtol=1e-12, atol=1e-14)
        np.testing.assert_array_equal(channel[:, 2], 0.0)

    def test_schedules(self):
        self.assertEqual([schedule_f1(t) for t in (1, 2, 10)], [6, 7, 15])
        self.assertEqual([schedule_f2(t) for t in (1, 2, 10)], [5, 8, 12])


class EmTest(SimpleTestCase):
    """Tests for the em baselines"""

    def test_bundled_instance(self):
        problem = bundled_problem()
        result = em_solve(problem, SolverConfig())
        self.assertEqual(result.termination, Termination.TOLERANCE)
        self.assertAlmostEqual(result.objective, OPTIMAL_OBJECTIVE, delta=1e-4)
        self.assertAlmostEqual(result.details["distortion"], 1.5, delta=1e-4)
        np.testing.assert_allclose(result.details["channel"], optimal_channel(), atol=1e-3)
        self.assertEqual(result.details["sign"], -1.0)
        self.assertEqual(result.eta[-1], 1.0)
        self.assertTrue(np.all(np.isfinite(result.theta)))

    def test_binary_hamming(self):
        result = em_solve(hamming_problem(0.1), SolverConfig())
        self.assertAlmostEqual(result.objective, 0.368064, delta=1e-4)

    def test_skewed_binary_source(self):
        """For a Bernoulli(0.3) source the rate at D = 0.15 is h(0.3) - h(0.15)"""
        result = em_solve(hamming_problem(0.15, p_x=(0.7, 0.3)), SolverConfig())
        self.assertAlmostEqual(
            result.objective, binary_entropy(0.3) - binary_entropy(0.15), delta=1e-4
        )

    def test_e_step(self):
        """The second m-step tilts the output marginal of the first channel"""
        problem = bundled_problem()
        first = em_solve(problem, SolverConfig(max_iterations=1))
        second = em_solve(problem, SolverConfig(max_iterations=2, objective_tolerance=0.0))
        marginal = np.array(
            [sum(problem.p_x[x] * first.details["channel"][x, y] for x in range(3)) for y in range(3)]
        )
        np.testing.assert_allclose(
            second.details["channel"],
            tilted_channel(
                marginal, problem.distortion, second.details["tau"], second.details["sign"]
            ),
            atol=1e-12,
        )

    def test_monotone(self):
        for problem in (bundled_problem(), hamming_problem(0.1)):
            objectives = em_solve(problem, SolverConfig()).trace.objectives
            self.assertTrue(np.all(np.diff(objectives) <= 1e-10))

    def test_cumulative_inner(self):
        trace = em_solve(bundled_problem(), SolverConfig(max_iterations=20)).trace
        counts = [row.cumulative_inner for row in trace]
        self.assertTrue(all(later > earlier for earlier, later in zip(counts, counts[1:])))

    def test_initial_marginal(self):
        with self.assertRaises(InvalidArgumentError):
            em_solve(bundled_problem(), SolverConfig(), p_y_init=[0.5, 0.5, 0.0])


class EmNewtonTest(SimpleTestCase):
    """Tests for em with a scheduled number of Newton updates"""

    def test_long_schedule_matches_em(self):
        problem = bundled_problem()
        config = SolverConfig(max_iterations=40, objective_tolerance=0.0)
        exact = em_solve(problem, config)
        scheduled = em_solve_newton(problem, config, schedule=lambda step: 100)
        np.testing.assert_allclose(scheduled.trace.objectives, exact.trace.objectives, atol=1e-8)

    def test_schedules_reach_the_optimum(self):
        for schedule in (schedule_f1, schedule_f2):
            result = em_solve_newton(bundled_problem(), SolverConfig(), schedule=schedule)
            self.assertAlmostEqual(result.objective, OPTIMAL_OBJECTIVE, delta=1e-4)

    def test_cumulative_counts(self):
        for schedule in (schedule_f1, schedule_f2):
            trace = em_solve_newton(
                bundled_problem(),
                SolverConfig(max_iterations=10, objective_tolerance=0.0),
                schedule=schedule,
            ).trace
            self.assertEqual([row.iteration for row in trace], list(range(1, 11)))
            self.assertEqual(
                [row.cumulative_inner for row in trace],
                list(np.cumsum([schedule(t) for t in range(1, 11)])),
            )

    def test_schedule_must_be_positive(self):
        with self.assertRaises(InvalidArgumentError):
            em_solve_newton(bundled_problem(), SolverConfig(), schedule=lambda step: 0)

    def test_random_instances(self):
        """Exact and scheduled m-steps follow the same iterates on random instances"""
        rng = np.random.default_rng(59)
        config = SolverConfig(max_iterations=30, objective_tolerance=0.0)
        for d in (3, 3, 3, 4, 4, 4):
            problem = interior_problem(rng, d)
            exact = em_solve(problem, config)
            scheduled = em_solve_newton(problem, config, schedule=lambda step: 60)
            self.assertAlmostEqual(scheduled.objective, exact.objective, delta=2e-4)


class OracleTest(SimpleTestCase):
    """Solvers against direct minimization over all channels of small instances"""

    # 2x3 instances whose third output is used at the optimum
    INTERIOR_2X3 = (
        ((0.5, 0.5), ((0.0, 1.0, 0.3), (1.0, 0.0, 0.3)), 0.2),
        ((0.6, 0.4), ((0.0, 1.0, 0.25), (1.0, 0.0, 0.25)), 0.15),
        ((0.45, 0.55), ((0.0, 1.0, 0.3), (1.2, 0.0, 0.35)), 0.2),
        ((0.5, 0.5), ((0.0, 1.0, 0.2), (1.0, 0.0, 0.2)), 0.15),
    )
    # 2x3 instances whose optimum leaves an output unused
    BOUNDARY_2X3 = (
        ((0.5, 0.5), ((0.0, 1.0, 0.6), (1.0, 0.0, 0.6)), 0.3),
        ((0.4, 0.6), ((0.0, 1.0, 2.0), (2.0, 1.0, 0.0)), 0.5),
    )

    def check_em(self, problem, best):
        result = em_solve(problem, SolverConfig())
        self.assertAlmostEqual(result.objective, best, delta=1e-3)
        check_channel(self, problem, result.details["channel"], tol=1e-6)
        for schedule in (schedule_f1, schedule_f2):
            scheduled = em_solve_newton(problem, SolverConfig(), schedule=schedule)
            self.assertAlmostEqual(scheduled.objective, best, delta=1e-3)

    def check_minfree(self, problem, best):
        result = rd_solve_minfree(problem, SolverConfig(gamma=50.0))
        self.assertAlmostEqual(result.objective, best, delta=1e-3)
        self.assertGreaterEqual(result.details["joint"].min(), EPSILON)

    def test_binary_instances(self):
        rng = np.random.default_rng(61)
        for _ in range(6):
            problem = interior_problem(rng, 2)
            best = binary_oracle(problem)
            self.assertGreater(best, 0.0)
            self.check_em(problem, best)
            self.check_minfree(problem, best)

    def test_binary_oracle_matches_general(self):
        problem = hamming_problem(0.15, p_x=(0.7, 0.3))
        self.assertAlmostEqual(binary_oracle(problem), channel_oracle(problem), delta=1e-5)
        self.assertAlmostEqual(
            binary_oracle(problem), binary_entropy(0.3) - binary_entropy(0.15), delta=1e-6
        )

    def test_interior_2x3_instances(self):
        for p_x, distortion, level in self.INTERIOR_2X3:
            problem = RdProblem(np.array(p_x), np.array(distortion), level)
            best = channel_oracle(problem)
            self.check_em(problem, best)
            self.check_minfree(problem, best)

    def test_boundary_2x3_instances(self):
        for p_x, distortion, level in self.BOUNDARY_2X3:
            problem = RdProblem(np.array(p_x), np.array(distortion), level)
            self.check_em(problem, channel_oracle(problem))

    def test_minfree_binary_instance(self):
        problem = hamming_problem(0.15, p_x=(0.7, 0.3))
        result = rd_solve_minfree(problem, SolverConfig(gamma=50.0))
        self.assertAlmostEqual(result.objective, binary_oracle(problem), delta=1e-3)
