#!/usr/bin/env python3
"""
Tests for recovery metrics, quadratic means, cross-validation and the
experiment drivers.
"""

import math
import os
import sys
import unittest
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ccs.local_moments import IndexedSample, SmoothingConfig, local_covariance_field, uniform_grid
from ccs.solvers import EdgeSet, PrecisionField, SolverConfig, simulation_lambda
from ccs.synthetic import make_scenario, sample_dataset
from ccs.evaluation import (
    ExperimentSettings,
    cv_loss,
    fold_assignment,
    frobenius_error,
    gaussian_loss,
    method_lambda_path,
    quad_mean,
    recovery_metrics,
    rescaled_sample_size,
    run_coverage_experiment,
    run_recovery_experiment,
    run_scaling_experiment,
    signal_strength,
    sup_deviation,
)
from utils.exceptions import CCSError, GridMismatchError, NotConvergedError, ValidationError

EXACT = SolverConfig(beta=1.0, rel_tol=1e-15, max_iter=20000, restart=True)


def _random_symmetric_list(rng, m, p):
    a = rng.normal(size=(m, p, p))
    return list(0.5 * (a + a.transpose(0, 2, 1)))


def _quick_settings(**overrides):
    base = ExperimentSettings(
        smoothing=SmoothingConfig(grid_size=6),
        replicates=2,
        lambda_count=4,
        seed=3,
    )
    return replace(base, **overrides)


class TestRecoveryMetrics(unittest.TestCase):
    """Test precision, recall, F1 and Hamming distance"""

    def setUp(self):
        """Set up ten true edges and eight estimated ones, six shared"""
        self.truth = EdgeSet(12, [(i, i + 1) for i in range(10)])
        self.estimate = EdgeSet(12, [(i, i + 1) for i in range(6)] + [(0, 5), (0, 6)])

    def test_worked_example(self):
        """Test |S| = 10, |S_hat| = 8 with overlap 6"""
        metrics = recovery_metrics(self.estimate, self.truth)
        self.assertAlmostEqual(metrics.precision, 0.75)
        self.assertAlmostEqual(metrics.recall, 0.6)
        self.assertAlmostEqual(metrics.f1, 2.0 / 3.0)
        self.assertEqual(metrics.hamming, 6)

    def test_swapped_arguments(self):
        """Test precision and recall exchange roles when arguments swap"""
        forward = recovery_metrics(self.estimate, self.truth)
        backward = recovery_metrics(self.truth, self.estimate)
        self.assertAlmostEqual(forward.precision, backward.recall)
        self.assertAlmostEqual(forward.recall, backward.precision)
        self.assertEqual(forward.hamming, backward.hamming)

    def test_empty_estimate(self):
        """Test an empty estimate has precision 1, recall 0 and F1 0"""
        metrics = recovery_metrics(EdgeSet(12), self.truth)
        self.assertEqual(metrics.precision, 1.0)
        self.assertEqual(metrics.recall, 0.0)
        self.assertEqual(metrics.f1, 0.0)
        self.assertEqual(metrics.hamming, 10)

    def test_exact_recovery(self):
        """Test identical edge sets"""
        metrics = recovery_metrics(self.truth, self.truth)
        self.assertEqual((metrics.precision, metrics.recall, metrics.f1, metrics.hamming),
                         (1.0, 1.0, 1.0, 0))

    def test_node_count_mismatch(self):
        """Test edge sets over different node counts"""
        with self.assertRaises(GridMismatchError):
            recovery_metrics(EdgeSet(3), EdgeSet(4))


class TestAccuracyMetrics(unittest.TestCase):
    """Test Frobenius error, signal strength and sup deviation"""

    def test_frobenius_zero(self):
        """Test an exact estimate"""
        truth = np.tile(np.eye(3), (4, 1, 1))
        self.assertEqual(frobenius_error(truth.copy(), truth), 0.0)

    def test_frobenius_identity_vs_zero(self):
        """Test estimate I against truth 0 gives p"""
        self.assertAlmostEqual(frobenius_error(np.tile(np.eye(5), (3, 1, 1)), np.zeros((3, 5, 5))),
                               5.0)

    def test_frobenius_against_loop(self):
        """Test against an explicit double loop over grid points and entries"""
        rng = np.random.default_rng(0)
        estimate = rng.normal(size=(4, 3, 3))
        truth = rng.normal(size=(4, 3, 3))
        expected = 0.0
        for k in range(4):
            for i in range(3):
                for j in range(3):
                    expected += (estimate[k, i, j] - truth[k, i, j]) ** 2
        self.assertAlmostEqual(frobenius_error(estimate, truth), expected / 4, places=12)

    def test_frobenius_accepts_fields(self):
        """Test a fitted field is compared through its matrices"""
        grid = uniform_grid(2)
        matrices = np.tile(np.eye(2), (2, 1, 1))
        field = PrecisionField(grid, matrices, np.zeros((2, 2)), EdgeSet(2))
        self.assertEqual(frobenius_error(field, matrices), 0.0)
        with self.assertRaises(GridMismatchError):
            frobenius_error(field, matrices[:1])

    def test_signal_strength(self):
        """Test the smallest quadratic-mean edge magnitude"""
        truth = np.tile(np.eye(3), (2, 1, 1))
        truth[:, 0, 1] = truth[:, 1, 0] = [3.0, 4.0]
        truth[:, 1, 2] = truth[:, 2, 1] = [1.0, 1.0]
        self.assertAlmostEqual(signal_strength(truth, EdgeSet(3, [(0, 1), (1, 2)])), 1.0)
        self.assertAlmostEqual(signal_strength(truth, EdgeSet(3, [(0, 1)])),
                               math.sqrt(12.5))
        self.assertTrue(math.isnan(signal_strength(truth, EdgeSet(3))))

    def test_sup_deviation(self):
        """Test the largest absolute entry difference"""
        estimate = np.zeros((2, 2, 2))
        estimate[1, 0, 1] = -0.75
        self.assertEqual(sup_deviation(estimate, np.zeros((2, 2, 2))), 0.75)


class TestQuadMean(unittest.TestCase):
    """Test entrywise quadratic means and their norm inequalities"""

    def test_single_matrix(self):
        """Test one matrix gives its entrywise absolute value"""
        A = np.array([[1.0, -2.0], [-2.0, 3.0]])
        np.testing.assert_allclose(quad_mean([A]), np.abs(A))

    def test_opposite_pair(self):
        """Test {A, -A} gives |A|"""
        A = np.array([[1.0, -2.0], [-2.0, 3.0]])
        np.testing.assert_allclose(quad_mean([A, -A]), np.abs(A))

    def test_empty_list(self):
        """Test an empty list is rejected"""
        with self.assertRaises(ValidationError):
            quad_mean([])

    def test_entrywise_max_bound(self):
        """Test max |H(A)| <= max_i max |A_i| on random symmetric lists"""
        rng = np.random.default_rng(1)
        for trial in range(1000):
            with self.subTest(trial=trial):
                samples = _random_symmetric_list(rng, 1 + trial % 7, 4)
                bound = max(np.max(np.abs(A)) for A in samples)
                self.assertLessEqual(np.max(quad_mean(samples)), bound + 1e-12)

    def test_sum_inequality(self):
        """Test max |H(A + B)| <= max |H(A) + H(B)|"""
        rng = np.random.default_rng(2)
        for trial in range(1000):
            with self.subTest(trial=trial):
                m = 1 + trial % 5
                A = _random_symmetric_list(rng, m, 3)
                B = _random_symmetric_list(rng, m, 3)
                combined = quad_mean([a + b for a, b in zip(A, B)])
                self.assertLessEqual(np.max(combined),
                                     np.max(quad_mean(A) + quad_mean(B)) + 1e-12)
                # the entrywise form of the same inequality
                self.assertTrue(np.all(combined <= quad_mean(A) + quad_mean(B) + 1e-12))

    def test_row_sum_and_product_bounds_are_not_general(self):
        """Test max row sums and products can exceed the pointwise bounds"""
        first = np.array([[1.0, 0.0], [0.0, 0.0]])
        second = np.array([[0.0, 1.0], [1.0, 0.0]])
        means = quad_mean([first, second])
        self.assertAlmostEqual(np.abs(means).sum(axis=1).max(), math.sqrt(2.0))
        self.assertGreater(np.abs(means).sum(axis=1).max(), 1.0)

        spike = [np.array([[1.0]]), np.array([[0.0]])]
        product = quad_mean([a @ a for a in spike])
        self.assertGreater(product[0, 0], quad_mean(spike)[0, 0] ** 2)


class TestGaussianLoss(unittest.TestCase):
    """Test the held-out negative log-likelihood"""

    def test_identity_at_origin(self):
        """Test Omega = I and x = 0 gives zero"""
        self.assertEqual(gaussian_loss(np.eye(3), np.zeros((4, 3))), 0.0)
        self.assertEqual(gaussian_loss(np.tile(np.eye(3), (4, 1, 1)), np.zeros((4, 3))), 0.0)

    def test_scalar_hand_computation(self):
        """Test p = 1 against sum(-log w + w x^2)"""
        omegas = np.array([2.0, 0.5, 1.5]).reshape(3, 1, 1)
        x = np.array([[1.0], [-2.0], [0.5]])
        expected = sum(-math.log(w) + w * xi**2 for w, xi in zip([2.0, 0.5, 1.5], x[:, 0]))
        self.assertAlmostEqual(gaussian_loss(omegas, x), expected, places=12)

    def test_shared_matrix_matches_stack(self):
        """Test a shared (p, p) matrix equals the same matrix repeated"""
        rng = np.random.default_rng(3)
        omega = np.array([[2.0, 0.3], [0.3, 1.0]])
        x = rng.normal(size=(6, 2))
        self.assertAlmostEqual(gaussian_loss(omega, x),
                               gaussian_loss(np.tile(omega, (6, 1, 1)), x), places=10)

    def test_not_positive_definite(self):
        """Test an indefinite estimate is rejected"""
        with self.assertRaises(ValidationError):
            gaussian_loss(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros((1, 2)))


class TestCrossValidation(unittest.TestCase):
    """Test fold assignment and the K-fold loss"""

    def setUp(self):
        """Set up a small sample with an index-varying correlation"""
        scenario = make_scenario("chain", 4, "two_regime", 0)
        self.sample, _ = sample_dataset(scenario, 120, 1)

    def test_fold_partition(self):
        """Test folds partition 0..n-1 into near-equal blocks"""
        blocks = fold_assignment(23, 5, 0)
        merged = np.sort(np.concatenate(blocks))
        np.testing.assert_array_equal(merged, np.arange(23))
        sizes = [block.size for block in blocks]
        self.assertLessEqual(max(sizes) - min(sizes), 1)
        for first, second in zip(blocks, fold_assignment(23, 5, 0)):
            np.testing.assert_array_equal(first, second)

    def test_invalid_fold_counts(self):
        """Test fewer than two folds or more folds than observations"""
        for folds in (1, 24):
            with self.subTest(folds=folds):
                with self.assertRaises(ValidationError):
                    fold_assignment(23, folds, 0)

    def test_static_scalar_hand_computation(self):
        """Test p = 1 static mode against the inverse training variance"""
        rng = np.random.default_rng(5)
        sample = IndexedSample(z=rng.uniform(size=40), x=rng.normal(scale=1.5, size=(40, 1)))
        result = cv_loss(sample, 4, 0.0, SmoothingConfig(), EXACT, mode="static_glasso", seed=2)

        expected = []
        for test in fold_assignment(40, 4, 2):
            train = np.setdiff1d(np.arange(40), test)
            omega = 1.0 / np.var(sample.x[train, 0])
            expected.append(np.sum(-math.log(omega) + omega * sample.x[test, 0] ** 2))
        np.testing.assert_allclose(result.per_fold, expected, rtol=1e-6)
        self.assertAlmostEqual(result.total, sum(result.per_fold), places=9)

    def test_standard_error(self):
        """Test the spread estimate sqrt(K) * sd(per-fold losses)"""
        result = cv_loss(self.sample, 3, 1.0, SmoothingConfig(grid_size=6), SolverConfig(),
                         seed=4)
        self.assertEqual(len(result.per_fold), 3)
        expected = math.sqrt(3) * np.std(result.per_fold, ddof=1)
        self.assertAlmostEqual(result.standard_error, expected, places=10)
        self.assertEqual(result.as_dict()["mode"], "ccs")

    def test_parallel_matches_serial(self):
        """Test worker threads return the same per-fold losses"""
        smoothing = SmoothingConfig(grid_size=6)
        serial = cv_loss(self.sample, 3, 1.0, smoothing, SolverConfig(), seed=4)
        parallel = cv_loss(self.sample, 3, 1.0, smoothing, SolverConfig(), seed=4, n_jobs=3)
        self.assertEqual(serial.per_fold, parallel.per_fold)

    def test_strict_failure_names_fold(self):
        """Test a non-converged fold is reported with its index"""
        config = SolverConfig(max_iter=1)
        with self.assertRaises(NotConvergedError) as ctx:
            cv_loss(self.sample, 3, 0.05, SmoothingConfig(grid_size=6), config, strict=True)
        self.assertEqual(ctx.exception.fold, 0)

    def test_unknown_mode(self):
        """Test modes other than ccs and static_glasso"""
        with self.assertRaises(ValidationError):
            cv_loss(self.sample, 3, 0.1, SmoothingConfig(), SolverConfig(), mode="pointwise")


class TestRecoveryExperiment(unittest.TestCase):
    """Test the precision-recall driver"""

    def setUp(self):
        """Set up a five-node chain scenario"""
        self.scenario = make_scenario("chain", 5, "sin", 0)

    def test_lambda_above_max_recovers_nothing(self):
        """Test a penalty far above lambda_max gives recall 0 and precision 1"""
        table = run_recovery_experiment(self.scenario, 120, [1e4], _quick_settings())
        row = table.rows[0]
        self.assertEqual(row.recall, 0.0)
        self.assertEqual(row.precision, 1.0)
        self.assertEqual(row.hamming, 4.0)
        self.assertEqual(row.failures, 0)

    def test_determinism(self):
        """Test equal seeds give identical tables"""
        settings = _quick_settings()
        first = run_recovery_experiment(self.scenario, 120, None, settings)
        second = run_recovery_experiment(self.scenario, 120, None, settings)
        self.assertEqual(first, second)
        self.assertEqual(len(first.rows), 4)
        self.assertIn(first.best, first.rows)

    def test_automatic_paths_descend(self):
        """Test every method derives a descending lambda path"""
        sample, _ = sample_dataset(self.scenario, 120, 0, uniform_grid(6))
        for method in ("ccs", "glasso", "pointwise"):
            with self.subTest(method=method):
                path = method_lambda_path(sample, _quick_settings(method=method))
                self.assertEqual(path.size, 4)
                self.assertTrue(np.all(np.diff(path) < 0.0))

    def test_default_path_length(self):
        """Test the automatic path is fine enough to bracket the recovering penalty"""
        self.assertEqual(ExperimentSettings().lambda_count, 60)
        sample, _ = sample_dataset(self.scenario, 120, 0, uniform_grid(6))
        settings = ExperimentSettings(smoothing=SmoothingConfig(grid_size=6))
        path = method_lambda_path(sample, settings)
        self.assertEqual(path.size, 60)
        # adjacent penalties differ by less than ten percent
        self.assertLess(path[0] / path[1], 1.1)

    def test_baseline_methods_run(self):
        """Test the glasso and pointwise baselines fill every row"""
        for method in ("glasso", "pointwise"):
            with self.subTest(method=method):
                table = run_recovery_experiment(self.scenario, 120, None,
                                                _quick_settings(method=method))
                self.assertEqual(table.method, method)
                self.assertTrue(all(row.failures == 0 for row in table.rows))

    def test_all_failures_raise(self):
        """Test failures are counted and a path with no success is an error"""
        settings = _quick_settings(solver_config=SolverConfig(max_iter=1), strict=True)
        with self.assertRaises(CCSError):
            run_recovery_experiment(self.scenario, 120, [0.05], settings)

    def test_invalid_settings(self):
        """Test unknown methods and non-positive replicate counts"""
        with self.assertRaises(ValidationError):
            ExperimentSettings(method="lasso")
        with self.assertRaises(ValidationError):
            ExperimentSettings(replicates=0)


class TestScalingExperiment(unittest.TestCase):
    """Test the rescaled sample size driver"""

    def test_rescaled_sample_size(self):
        """Test ceil(C d^2.5 (log p)^1.25)"""
        self.assertEqual(rescaled_sample_size(2.0, 3, 20),
                         math.ceil(2.0 * 3**2.5 * math.log(20) ** 1.25))
        self.assertEqual(rescaled_sample_size(1.0, 1, 3), math.ceil(math.log(3) ** 1.25))

    def test_row_count(self):
        """Test one row per graph kind, p and C"""
        settings = _quick_settings(replicates=1)
        rows = run_scaling_experiment(["chain"], [5, 6], [4.0, 8.0], settings)
        self.assertEqual(len(rows), 4)
        for row in rows:
            with self.subTest(p=row.p, C=row.C):
                self.assertEqual(row.max_degree, 2)
                self.assertEqual(row.n, rescaled_sample_size(row.C, 2, row.p))
                self.assertAlmostEqual(row.lam, simulation_lambda(row.n, row.p, 1.0, 6))

    def test_penalty_grows_with_grid(self):
        """Test the scaling penalty follows sqrt(K) n^(-3/8) sqrt(log p)"""
        for grid_size in (6, 24):
            with self.subTest(grid_size=grid_size):
                settings = _quick_settings(replicates=1,
                                           smoothing=SmoothingConfig(grid_size=grid_size))
                row = run_scaling_experiment(["chain"], [5], [4.0], settings)[0]
                expected = math.sqrt(grid_size) * row.n ** (-0.375) * math.sqrt(math.log(5))
                self.assertAlmostEqual(row.lam, expected)

    def test_unknown_graph_kind(self):
        """Test graph kinds are validated"""
        with self.assertRaises(ValidationError):
            run_scaling_experiment(["ring"], [5], [1.0], _quick_settings())


class TestCoverageExperiment(unittest.TestCase):
    """Test the coverage driver on a small problem"""

    def test_summary_shape(self):
        """Test a coverage run returns frequencies in [0, 1]"""
        scenario = make_scenario("chain", 4, "sin", 1)
        summary = run_coverage_experiment(scenario, 200, 2, 0.05, _quick_settings())
        self.assertEqual(summary.replicates, 2)
        for value in (summary.avgcov_S, summary.avgcov_Sc):
            self.assertTrue(0.0 <= value <= 1.0)
        self.assertGreater(summary.avglength_S, 0.0)


@pytest.mark.slow
class TestStatisticalBehaviour(unittest.TestCase):
    """Monte Carlo checks of recovery, accuracy, coverage and model choice"""

    def test_chain_recovery_beats_static_glasso(self):
        """Test CCS recovers a sine-path chain that static glasso misses"""
        scenario = make_scenario("chain", 20, "sin", 0)
        settings = ExperimentSettings(smoothing=SmoothingConfig(grid_size=25), replicates=5)
        ccs_table = run_recovery_experiment(scenario, 500, None, settings)
        glasso_table = run_recovery_experiment(scenario, 500, None,
                                               replace(settings, method="glasso"))
        self.assertGreaterEqual(ccs_table.best.f1, 0.95)
        self.assertGreaterEqual(ccs_table.best.f1 - glasso_table.best.f1, 0.2)

    def test_covariance_deviation_shrinks(self):
        """Test the sup deviation of the smoothed covariance falls with n"""
        scenario = make_scenario("chain", 5, "constant", 0)
        grid = uniform_grid(51)
        sigma = np.linalg.inv(scenario.precision_at(np.array([0.5]))[0])
        means = []
        for n in (250, 1000, 4000):
            errors = []
            for seed in range(10):
                sample, _ = sample_dataset(scenario, n, seed, grid)
                cov = local_covariance_field(sample, grid, n ** (-0.2), "epanechnikov", "none")
                errors.append(sup_deviation(cov.matrices, np.broadcast_to(sigma, cov.matrices.shape)))
            means.append(np.mean(errors))
        for before, after in zip(means, means[1:]):
            self.assertLess(after, before)
            self.assertTrue(0.2 <= after / before <= 0.9)

    def test_random_walk_coverage(self):
        """Test pointwise bands cover the truth on and off the support"""
        scenario = make_scenario("chain", 10, "random_walk", 0)
        settings = ExperimentSettings(smoothing=SmoothingConfig(grid_size=25), seed=1)
        summary = run_coverage_experiment(scenario, 500, 50, 0.025, settings)
        for value in (summary.avgcov_S, summary.avgcov_Sc):
            self.assertGreaterEqual(value, 0.90)
            self.assertLessEqual(value, 1.0)

    def test_cv_prefers_ccs_on_two_regimes(self):
        """Test held-out loss favours CCS over static glasso when the graph switches"""
        scenario = make_scenario("chain", 10, "two_regime", 0)
        smoothing = SmoothingConfig(grid_size=25)
        wins = 0
        for seed in range(5):
            sample, _ = sample_dataset(scenario, 600, seed)
            ccs = cv_loss(sample, 5, 0.15, smoothing, SolverConfig(), seed=seed)
            static = cv_loss(sample, 5, 0.01, smoothing, SolverConfig(), mode="static_glasso",
                             seed=seed)
            wins += ccs.total < static.total
        self.assertGreaterEqual(wins, 4)

    def test_scaling_hamming_trend(self):
        """Test the Hamming distance does not grow with the rescaled sample size"""
        settings = ExperimentSettings(smoothing=SmoothingConfig(grid_size=25), replicates=5)
        rows = run_scaling_experiment(["chain"], [10], [1.0, 2.0, 4.0, 8.0, 16.0], settings)
        correlation = stats.spearmanr([row.C for row in rows], [row.hamming for row in rows])[0]
        self.assertLessEqual(correlation, 0.0)


if __name__ == "__main__":
    unittest.main()
