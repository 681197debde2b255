import math
import unittest
from unittest import mock

import numpy as np

from aclab.errors import AmbiguousProjection, DenominatorNearZero, PreconditionViolation
from aclab.services.mesh import Field, build_grid, simplex_quadrature
from aclab.services.scalar_theory import cutoff_profile, make_quartic_potential, profile_field, solve_profile
from aclab.services.tubular import (
    cutoff_errors,
    cutoff_tangent_inner,
    dist_to_manifold,
    fermi_gradient,
    fluctuation_norm,
    normal_vector_check,
    project,
    tangent_functional,
    tangent_integral,
    tangent_norm_sq,
)


class ProjectionTests(unittest.TestCase):
    def setUp(self):
        self.profile = solve_profile(make_quartic_potential())
        self.grid = build_grid(0, 6.0, 8)

    def test_recovers_shift_of_profile(self):
        coords = project(profile_field(self.profile, 0.7, self.grid), self.profile)
        self.assertAlmostEqual(coords.xi, 0.7, delta=5e-3)
        self.assertLess(coords.dist, 1e-2)
        self.assertLess(abs(coords.orth_residual), 1e-10)
        self.assertEqual(coords.v.boundary, "zero")
        self.assertEqual(set(coords.to_dict()), {"xi", "dist", "manifold_dist", "orth_residual"})

    def test_recovers_shift_in_higher_dimension(self):
        grid = build_grid(1, 4.0, 4)
        coords = project(profile_field(self.profile, -0.4, grid), self.profile)
        self.assertAlmostEqual(coords.xi, -0.4, delta=1e-2)

    def test_distance_matches_projection(self):
        rng = np.random.default_rng(5)
        base = profile_field(self.profile, 0.2, self.grid).coeffs
        h = Field(self.grid, base + 0.05 * rng.standard_normal(self.grid.N))
        coords = project(h, self.profile)
        self.assertAlmostEqual(dist_to_manifold(h, self.profile), coords.manifold_dist, delta=1e-8)

    def test_dist_is_norm_of_fluctuation(self):
        rng = np.random.default_rng(9)
        for grid in (self.grid, build_grid(1, 4.0, 4)):
            base = profile_field(self.profile, 0.15, grid).coeffs
            h = Field(grid, base + 0.05 * rng.standard_normal(grid.N))
            coords = project(h, self.profile)
            rule = simplex_quadrature(grid, 2)
            reference = math.sqrt(float(rule.weights @ rule.values(coords.v.extended()) ** 2))
            self.assertAlmostEqual(coords.dist, reference, delta=1e-10)
            self.assertAlmostEqual(coords.dist, fluctuation_norm(coords.v), delta=1e-12)
            # interpolation error of m_xi separates the two distances
            self.assertAlmostEqual(coords.dist, coords.manifold_dist, delta=1e-2)

    def test_fluctuation_needs_ramp_field(self):
        h = Field(self.grid, np.zeros(self.grid.N), "zero")
        with self.assertRaises(PreconditionViolation):
            project(h, self.profile, xi0=0.0)
        with self.assertRaises(PreconditionViolation):
            fluctuation_norm(profile_field(self.profile, 0.0, self.grid))

    def test_ambiguous_scan_is_reported(self):
        xis = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        g = np.array([0.1, 0.5, 1.0, 0.5, 0.1])
        h = profile_field(self.profile, 0.0, self.grid)
        with mock.patch("aclab.services.tubular._scan", return_value=(xis, g)):
            with self.assertRaises(AmbiguousProjection):
                project(h, self.profile)

    def test_explicit_start_skips_scan(self):
        h = profile_field(self.profile, 1.0, self.grid)
        with mock.patch("aclab.services.tubular._scan") as scan:
            coords = project(h, self.profile, xi0=0.9)
        scan.assert_not_called()
        self.assertAlmostEqual(coords.xi, 1.0, delta=5e-3)


class FermiGradientTests(unittest.TestCase):
    def setUp(self):
        self.profile = solve_profile(make_quartic_potential())

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        for grid in (build_grid(0, 5.0, 4), build_grid(1, 3.0, 2)):
            base = profile_field(self.profile, 0.3, grid).coeffs
            h = Field(grid, base + 0.02 * rng.standard_normal(grid.N))
            gradient = fermi_gradient(h, self.profile)
            for _ in range(3):
                direction = rng.standard_normal(grid.N)
                step = 1e-4
                plus = project(h.with_coeffs(h.coeffs + step * direction), self.profile, xi0=gradient.xi).xi
                minus = project(h.with_coeffs(h.coeffs - step * direction), self.profile, xi0=gradient.xi).xi
                numeric = (plus - minus) / (2.0 * step)
                self.assertAlmostEqual(float(gradient.analytic @ direction), numeric, delta=1e-5 * max(1.0, abs(numeric)))

    def test_norm_bound_dominates_gradient(self):
        grid = build_grid(0, 5.0, 4)
        gradient = fermi_gradient(profile_field(self.profile, 0.0, grid), self.profile)
        self.assertGreater(gradient.denominator, 0.0)
        self.assertLessEqual(float(np.linalg.norm(gradient.analytic)), gradient.norm_bound)

    def test_small_denominator_is_rejected(self):
        grid = build_grid(0, 5.0, 4)
        h = profile_field(self.profile, 0.0, grid)
        with mock.patch("aclab.services.tubular.DENOMINATOR_FLOOR", 2.0):
            with self.assertRaises(DenominatorNearZero):
                fermi_gradient(h, self.profile)


class TangentTests(unittest.TestCase):
    def setUp(self):
        self.profile = solve_profile(make_quartic_potential())

    def test_tangent_integral_is_jump(self):
        self.assertAlmostEqual(tangent_integral(self.profile), 2.0, delta=1e-8)

    def test_tangent_norm_is_surface_tension(self):
        grid = build_grid(0, 6.0, 4)
        self.assertAlmostEqual(tangent_norm_sq(grid, self.profile, 0.0), self.profile.surface_tension, delta=1e-8)

    def test_tangent_functional_integrates_test_vectors(self):
        grid = build_grid(0, 6.0, 8)
        ones = np.ones(grid.N)
        # P1 function equal to one inside, dropping to zero on the outer cells
        self.assertAlmostEqual(float(tangent_functional(grid, self.profile, 0.0) @ ones), 2.0, delta=1e-3)

    def test_normal_vector_bounds(self):
        grid = build_grid(0, 4.0, 4)
        check = normal_vector_check(grid, self.profile, 0.0, 0.1, make_quartic_potential().c3)
        self.assertTrue(check.passed, msg=str(check))
        self.assertGreater(check.tangent_norm, 0.0)


class CutoffErrorTests(unittest.TestCase):
    def setUp(self):
        self.profile = solve_profile(make_quartic_potential())

    def test_interpolated_profile_is_close(self):
        grid = build_grid(0, 6.0, 8)
        errors = cutoff_errors(profile_field(self.profile, 0.0, grid), self.profile, 0.0)
        self.assertLess(errors.l2, 1e-2)
        self.assertLess(errors.h1, 5e-2)

    def test_h1_error_combines_l2_and_slope(self):
        grid = build_grid(0, 6.0, 4)
        errors = cutoff_errors(cutoff_profile(0.0, 0.3, 0.15, grid, self.profile), self.profile, 0.0)
        self.assertGreaterEqual(errors.h1, errors.dx)
        self.assertGreaterEqual(errors.h1, errors.l2)
        self.assertAlmostEqual(errors.h1**2, errors.l2**2 + errors.dx**2, delta=1e-14)

    def test_cutoff_errors_shrink_with_radius(self):
        grid = build_grid(0, 8.0, 8)
        wide = cutoff_profile(0.0, 0.05, 0.5, grid, self.profile)
        narrow = cutoff_profile(0.0, 0.5, 0.5, grid, self.profile)
        wide_l2 = cutoff_errors(wide, self.profile, 0.0).l2
        narrow_l2 = cutoff_errors(narrow, self.profile, 0.0).l2
        self.assertLess(wide_l2, narrow_l2)
        self.assertLess(abs(cutoff_tangent_inner(wide, self.profile, 0.0)), math.sqrt(2.0) * wide_l2 + 1e-12)

    def test_tangent_inner_vanishes_off_node(self):
        grid = build_grid(0, 8.0, 8)
        xi = 0.3
        wide = cutoff_profile(xi, 0.05, 0.5, grid, self.profile)
        l2 = cutoff_errors(wide, self.profile, xi).l2
        bound = math.sqrt(tangent_norm_sq(grid, self.profile, xi)) * l2
        self.assertGreater(l2, 0.0)
        self.assertLessEqual(abs(cutoff_tangent_inner(wide, self.profile, xi)), 5e-2 * bound)


if __name__ == "__main__":
    unittest.main()
