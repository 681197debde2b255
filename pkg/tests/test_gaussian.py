import math
import unittest

import numpy as np
import scipy.sparse as sp
from scipy.stats import multivariate_normal

from aclab.errors import FactorizationFailure, InvalidParameters
from aclab.services.gaussian import (
    concentration_h1_check,
    concentration_sup_check,
    exact_sample,
    gaussian_from_precision,
    hilbert_concentration_check,
    log_partition_ratio_21,
    log_partition_ratio_31,
    make_gaussian,
    nu1_spec,
    nu2_spec,
    rho_spec,
    sample_batch,
)
from aclab.services.mesh import assemble, build_grid


class GaussianSpecTests(unittest.TestCase):
    def test_logdet_of_one_dimensional_stiffness(self):
        grid = build_grid(0, 2.0, 2)
        spec = nu2_spec(grid)
        expected = math.log(grid.N + 1) - grid.N * math.log(grid.a)
        self.assertAlmostEqual(spec.logdet, expected, places=10)

    def test_factor_reproduces_precision(self):
        grid = build_grid(1, 1.0, 2)
        spec = rho_spec(grid, 0.5, 2.0)
        U = spec.factor
        np.testing.assert_allclose((U.T @ U).toarray(), spec.precision.toarray(), atol=1e-10)

    def test_log_pdf_matches_scipy(self):
        grid = build_grid(0, 1.0, 2)
        spec = nu1_spec(grid, 0.3)
        cov = np.linalg.inv(spec.precision.toarray())
        x = spec.mean.coeffs + 0.1 * np.arange(grid.N)
        reference = multivariate_normal(mean=spec.mean.coeffs, cov=cov).logpdf(x)
        self.assertAlmostEqual(spec.log_pdf(x), reference, places=8)
        batch = np.vstack([x, spec.mean.coeffs])
        self.assertEqual(spec.log_pdf(batch).shape, (2,))

    def test_nu1_mean_is_ramp(self):
        grid = build_grid(0, 2.0, 2)
        spec = make_gaussian("nu1", grid, eps=0.2)
        np.testing.assert_allclose(spec.mean.coeffs, grid.x_nodes / grid.L)
        self.assertEqual(spec.mean.boundary, "ramp")
        self.assertEqual(make_gaussian("rho", grid, eps=0.2, kappa=1.0).mean.boundary, "zero")

    def test_unknown_measure(self):
        with self.assertRaises(InvalidParameters):
            make_gaussian("nu9", build_grid(0, 2.0, 2))

    def test_indefinite_precision_fails_factorization(self):
        grid = build_grid(0, 1.0, 2)
        with self.assertRaises(FactorizationFailure):
            gaussian_from_precision(grid, -sp.identity(grid.N, format="csr"))


class SamplingTests(unittest.TestCase):
    def test_seeded_sampling_is_reproducible(self):
        spec = nu2_spec(build_grid(0, 2.0, 2))
        first = exact_sample(spec, 11)
        second = exact_sample(spec, 11)
        np.testing.assert_array_equal(first.coeffs, second.coeffs)
        self.assertEqual(first.boundary, "ramp")
        np.testing.assert_array_equal(sample_batch(spec, 10, seed=3), sample_batch(spec, 10, seed=3))

    def test_sample_covariance_matches_inverse_precision(self):
        grid = build_grid(0, 1.0, 2)
        spec = nu2_spec(grid)
        draws = sample_batch(spec, 20000, seed=0)
        self.assertEqual(draws.shape, (20000, grid.N))
        cov = np.linalg.inv(spec.precision.toarray())
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05 * np.max(cov))
        np.testing.assert_allclose(draws.mean(axis=0), spec.mean.coeffs, atol=0.05)


class PartitionRatioTests(unittest.TestCase):
    def test_ratio21_closed_form(self):
        grid = build_grid(1, 2.0, 4)
        self.assertEqual(grid.N, 75)
        self.assertAlmostEqual(log_partition_ratio_21(grid, 0.5), 37.5 * math.log(2.0) + 0.5, places=8)

    def test_ratio21_at_unit_eps_is_zero(self):
        self.assertAlmostEqual(log_partition_ratio_21(build_grid(0, 2.0, 2), 1.0), 0.0, places=10)

    def test_ratio31_lies_between_bounds(self):
        for d, L, n in ((0, 2.0, 2), (1, 1.0, 2)):
            grid = build_grid(d, L, n)
            ratio = log_partition_ratio_31(grid, 0.1, 1.0)
            self.assertTrue(ratio.passed, msg=str(ratio))
            self.assertLessEqual(ratio.lower, ratio.upper)
            self.assertGreater(ratio.poincare_constant, 0.0)


class ConcentrationTests(unittest.TestCase):
    def test_hilbert_check_scalar(self):
        check = hilbert_concentration_check([1.0], 1.0, 20000, seed=0)
        self.assertAlmostEqual(check.freq, 0.0455, delta=0.01)
        self.assertAlmostEqual(check.bound, math.exp(-0.5))
        self.assertTrue(check.passed)
        self.assertEqual(check.threshold, 2.0)

    def test_hilbert_check_rejects_bad_variances(self):
        with self.assertRaises(InvalidParameters):
            hilbert_concentration_check([1.0, 0.0], 1.0, 10)

    def test_sup_check(self):
        check = concentration_sup_check(build_grid(0, 2.0, 2), 0.01, 1.0, 0.5, 2000, seed=1)
        self.assertTrue(check.passed, msg=str(check))
        self.assertEqual(check.threshold, 0.5)

    def test_h1_check(self):
        grid = build_grid(0, 2.0, 2)
        check = concentration_h1_check(grid, 0.1, 1.0, 0.5, 2000, seed=2)
        self.assertTrue(check.passed, msg=str(check))
        self.assertAlmostEqual(check.threshold, math.sqrt(0.1 * grid.N) + 0.5)
        self.assertTrue(check.informative)

    def test_vacuous_bound_is_flagged(self):
        with self.assertLogs("aclab.services.gaussian", level="INFO"):
            check = concentration_sup_check(build_grid(0, 2.0, 2), 1.0, 1.0, 0.1, 100)
        self.assertFalse(check.informative)
        self.assertTrue(check.passed)


if __name__ == "__main__":
    unittest.main()
