#!/usr/bin/env python3
"""
Tests for de-sparsified estimates, confidence bands and coverage tallies.
"""

import os
import sys
import unittest

import numpy as np
from scipy import stats

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ccs.inference import (
    ConfidenceBand,
    band_half_width,
    confidence_band,
    coverage_tally,
    debias,
    normal_quantile,
)
from ccs.local_moments import CovarianceField, IndexedSample, IndexGrid, uniform_grid
from ccs.solvers import EdgeSet, PrecisionField
from utils.exceptions import EmptyBandwidthError, GridMismatchError, ValidationError


def _random_pd(rng, p):
    a = rng.normal(size=(p, p))
    return a @ a.T / p + np.eye(p)


def _identity_setup(K=3, p=3):
    grid = uniform_grid(K)
    identity = np.tile(np.eye(p), (K, 1, 1))
    field = PrecisionField(grid, identity.copy(), np.zeros((p, p)), EdgeSet(p))
    cov = CovarianceField(grid, identity.copy(), 0.3, "epanechnikov", "per_observation")
    return field, cov


def _band(grid, point, half):
    return ConfidenceBand(
        grid=grid,
        point=point,
        lower=point - half,
        upper=point + half,
        alpha=0.05,
        rate_mode="undersmoothed",
        n=100,
    )


class TestDebias(unittest.TestCase):
    """Test the de-sparsified estimator"""

    def test_exact_inverse(self):
        """Test the correction vanishes when omega inverts sigma"""
        sigma = _random_pd(np.random.default_rng(1), 4)
        omega = np.linalg.inv(sigma)
        np.testing.assert_allclose(debias(omega, sigma), omega, atol=1e-12)

    def test_identity(self):
        """Test omega = sigma = I"""
        np.testing.assert_array_equal(debias(np.eye(3), np.eye(3)), np.eye(3))

    def test_kronecker_form(self):
        """Test against the materialised 16 x 16 Kronecker product"""
        rng = np.random.default_rng(2)
        omega = _random_pd(rng, 4)
        sigma = _random_pd(rng, 4)
        correction = np.kron(omega, omega) @ (sigma - np.linalg.inv(omega)).flatten(order="F")
        expected = (omega.flatten(order="F") - correction).reshape(4, 4, order="F")
        np.testing.assert_allclose(debias(omega, sigma), expected, atol=1e-10)

    def test_stack_and_symmetry(self):
        """Test stacks are handled per grid point and outputs are symmetric"""
        rng = np.random.default_rng(3)
        omega = np.stack([_random_pd(rng, 3) for _ in range(4)])
        sigma = np.stack([_random_pd(rng, 3) for _ in range(4)])
        result = debias(omega, sigma)
        np.testing.assert_array_equal(result, result.transpose(0, 2, 1))
        for k in range(4):
            np.testing.assert_allclose(result[k], debias(omega[k], sigma[k]))

    def test_shape_mismatch(self):
        """Test inputs of different dimension"""
        with self.assertRaises(GridMismatchError):
            debias(np.eye(3), np.eye(2))


class TestNormalQuantile(unittest.TestCase):
    """Test the standard normal quantile"""

    def test_known_values(self):
        """Test the median and the 97.5% point"""
        self.assertEqual(normal_quantile(0.5), 0.0)
        self.assertAlmostEqual(normal_quantile(0.975), 1.95996398, delta=1e-8)

    def test_round_trip(self):
        """Test the CDF of the quantile returns p"""
        for p in np.linspace(0.001, 0.999, 37):
            with self.subTest(p=p):
                self.assertAlmostEqual(stats.norm.cdf(normal_quantile(p)), p, delta=1e-8)

    def test_outside_unit_interval(self):
        """Test p = 0, p = 1 and p > 1 are rejected"""
        for p in (0.0, 1.0, 1.5):
            with self.subTest(p=p):
                with self.assertRaises(ValidationError):
                    normal_quantile(p)


class TestHalfWidth(unittest.TestCase):
    """Test the interval half-width formula"""

    def test_hand_evaluation(self):
        """Test Omega = I, f = 1, n = 256, alpha = 0.05 with the epanechnikov kernel"""
        half = band_half_width(np.eye(3)[None], np.ones(1), 256, 0.05, "undersmoothed",
                               "epanechnikov")
        diagonal = normal_quantile(0.975) * 256 ** (-3.0 / 8.0) * np.sqrt(2.0 * 0.6)
        self.assertAlmostEqual(half[0, 1, 1], diagonal, places=12)
        self.assertAlmostEqual(half[0, 1, 1], 0.26838, places=4)
        off_diagonal = normal_quantile(0.975) * 256 ** (-3.0 / 8.0) * np.sqrt(0.6)
        self.assertAlmostEqual(half[0, 0, 2], off_diagonal, places=12)

    def test_monotonicity(self):
        """Test widths grow with 1/alpha and shrink with n"""
        omega = np.eye(2)[None]
        density = np.ones(1)

        def width(alpha, n, mode="undersmoothed"):
            return band_half_width(omega, density, n, alpha, mode, "boxcar")[0, 0, 1]

        self.assertGreater(width(0.01, 100), width(0.05, 100))
        self.assertGreater(width(0.05, 100), width(0.05, 1000))
        self.assertGreater(width(0.05, 1000), width(0.05, 1000, "theorem"))

    def test_density_scaling(self):
        """Test a four times larger density halves the width"""
        omega = np.eye(2)[None]
        base = band_half_width(omega, np.ones(1), 100, 0.05, "undersmoothed", "tricube")
        dense = band_half_width(omega, np.full(1, 4.0), 100, 0.05, "undersmoothed", "tricube")
        np.testing.assert_allclose(dense, base / 2.0)


class TestConfidenceBand(unittest.TestCase):
    """Test band construction from fitted fields"""

    def setUp(self):
        """Set up a sample spread over the unit interval"""
        rng = np.random.default_rng(4)
        self.sample = IndexedSample(z=rng.uniform(size=300), x=rng.normal(size=(300, 3)))

    def test_band_contains_point(self):
        """Test lower <= point <= upper with a symmetric band"""
        field, cov = _identity_setup()
        band = confidence_band(field, cov, self.sample, 0.05)
        self.assertTrue(np.all(band.lower <= band.point))
        self.assertTrue(np.all(band.point <= band.upper))
        np.testing.assert_allclose(band.upper - band.point, band.point - band.lower)
        np.testing.assert_allclose(band.point, cov.matrices)
        self.assertEqual(band.n, 300)

    def test_alpha_near_one(self):
        """Test widths vanish as alpha approaches one"""
        field, cov = _identity_setup()
        narrow = confidence_band(field, cov, self.sample, 1.0 - 1e-12)
        self.assertLess(np.max(narrow.width), 1e-10)

    def test_bandwidth_override(self):
        """Test an explicit bandwidth changes the density term only"""
        field, cov = _identity_setup()
        default = confidence_band(field, cov, self.sample, 0.05)
        wider_h = confidence_band(field, cov, self.sample, 0.05, h=0.6)
        np.testing.assert_array_equal(default.point, wider_h.point)
        self.assertFalse(np.allclose(default.width, wider_h.width))

    def test_empty_density(self):
        """Test a grid point without nearby samples is reported"""
        field, cov = _identity_setup()
        sample = IndexedSample(z=np.array([0.0, 0.05, 0.1]), x=np.ones((3, 3)))
        with self.assertRaises(EmptyBandwidthError) as ctx:
            confidence_band(field, cov, sample, 0.05, h=0.2)
        self.assertEqual(ctx.exception.z_query, 0.5)

    def test_grid_mismatch(self):
        """Test precision and covariance fields on different grids"""
        field, _ = _identity_setup(K=3)
        _, cov = _identity_setup(K=4)
        with self.assertRaises(GridMismatchError):
            confidence_band(field, cov, self.sample, 0.05)


class TestCoverageTally(unittest.TestCase):
    """Test empirical coverage summaries"""

    def setUp(self):
        """Set up a chain truth on a small grid"""
        self.grid = IndexGrid(np.array([0.0, 0.5, 1.0]))
        truth = np.tile(np.eye(3), (3, 1, 1))
        truth[:, 0, 1] = truth[:, 1, 0] = 0.3
        self.truth = truth
        self.support = EdgeSet(3, [(0, 1)])

    def test_infinite_width(self):
        """Test infinitely wide bands cover everything"""
        bands = [_band(self.grid, self.truth + 1.0, np.inf) for _ in range(2)]
        summary = coverage_tally(self.truth, bands, self.support)
        self.assertEqual(summary.avgcov_S, 1.0)
        self.assertEqual(summary.avgcov_Sc, 1.0)
        self.assertEqual(summary.avglength_S, np.inf)

    def test_zero_width_misses(self):
        """Test zero-width bands away from the truth cover nothing"""
        bands = [_band(self.grid, self.truth + 0.1, 0.0) for _ in range(3)]
        summary = coverage_tally(self.truth, bands, self.support)
        self.assertEqual(summary.avgcov_S, 0.0)
        self.assertEqual(summary.avgcov_Sc, 0.0)
        self.assertEqual(summary.replicates, 3)

    def test_partial_coverage(self):
        """Test per-pair frequencies over replicates and grid points"""
        hit = _band(self.grid, self.truth, 0.05)
        miss_point = self.truth.copy()
        miss_point[:, 0, 1] = miss_point[:, 1, 0] = 1.0
        miss = _band(self.grid, miss_point, 0.05)
        summary = coverage_tally(self.truth, [hit, miss], self.support)
        self.assertAlmostEqual(summary.pair_coverage[0, 1], 0.5)
        self.assertAlmostEqual(summary.avgcov_S, 0.5)
        self.assertAlmostEqual(summary.avgcov_Sc, 1.0)
        self.assertAlmostEqual(summary.avglength_S, 0.1)

    def test_default_support(self):
        """Test the support defaults to pairs that are nonzero somewhere"""
        bands = [_band(self.grid, self.truth, 0.0)]
        summary = coverage_tally(self.truth, bands)
        self.assertEqual(summary.avgcov_S, 1.0)
        self.assertEqual(set(summary.as_dict()), {"avgcov_S", "avgcov_Sc", "avglength_S",
                                                  "avglength_Sc", "replicates"})

    def test_mismatches(self):
        """Test empty band lists and mismatched grids"""
        with self.assertRaises(ValidationError):
            coverage_tally(self.truth, [])
        other = _band(uniform_grid(3), self.truth, 0.1)
        other_grid = IndexGrid(np.array([0.0, 0.25, 1.0]))
        with self.assertRaises(GridMismatchError):
            coverage_tally(self.truth, [other, _band(other_grid, self.truth, 0.1)])
        with self.assertRaises(GridMismatchError):
            coverage_tally(self.truth[:, :2, :2], [other])


if __name__ == "__main__":
    unittest.main()
