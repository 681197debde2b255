import math
import os
import tempfile
import unittest

import numpy as np

from aclab.errors import InvalidGrid, InvalidParameters
from aclab.services.mesh import (
    Field,
    assemble,
    build_grid,
    dump_matrices,
    gradient_operators,
    interpolate,
    mass_eigen_floor,
    mass_floor,
    nodal_field,
    simplex_norms,
    simplex_quadrature,
    simplex_volume,
    smallest_generalized_eigenvalue,
    subdivide_cube,
    unit_cube_mass_floor,
)


class GridTests(unittest.TestCase):
    def test_dof_counts(self):
        self.assertEqual(build_grid(0, 2.0, 2).N, 7)
        self.assertEqual(build_grid(1, 1.0, 2).N, 9)
        self.assertEqual(build_grid(1, 2.0, 4).N, 75)

    def test_rejects_degenerate_grids(self):
        with self.assertRaises(InvalidGrid):
            build_grid(0, 2.0, 1)
        with self.assertRaises(InvalidGrid):
            build_grid(0, 0.4, 2)
        with self.assertRaises(InvalidGrid):
            build_grid(-1, 2.0, 2)

    def test_snaps_length_to_lattice(self):
        with self.assertLogs("aclab.services.mesh", level="WARNING"):
            grid = build_grid(0, 2.3, 2)
        self.assertEqual(grid.L, 2.0)
        self.assertEqual(grid.floor_La, 4)

    def test_node_indexing_roundtrip(self):
        grid = build_grid(2, 1.0, 2)
        for index in (0, 5, grid.N - 1):
            self.assertEqual(grid.node_index(grid.node_multi_index(index)), index)
        coords = grid.node_coordinates()
        self.assertEqual(coords.shape, (grid.N, 3))
        self.assertAlmostEqual(coords[0, 0], -grid.L + grid.a)


class AssemblyTests(unittest.TestCase):
    def test_one_dimensional_matrices(self):
        grid = build_grid(0, 2.0, 2)
        fem = assemble(grid)
        a, N = grid.a, grid.N
        tri = 2.0 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)
        np.testing.assert_allclose(fem.stiffness.toarray(), tri / a, atol=1e-12)
        mass = (4.0 * np.eye(N) + np.eye(N, k=1) + np.eye(N, k=-1)) * a / 6.0
        np.testing.assert_allclose(fem.mass.toarray(), mass, atol=1e-12)

    def test_ramp_energy_matches_quadratic_form(self):
        for d, L, n in ((0, 2.0, 2), (1, 2.0, 2), (2, 1.0, 2)):
            grid = build_grid(d, L, n)
            fem = assemble(grid)
            ext = fem.ramp_field.extended()
            self.assertAlmostEqual(float(ext @ (fem.full_stiffness @ ext)), 2.0 / grid.L, places=12)
            self.assertAlmostEqual(fem.ramp_energy, 2.0 / grid.L)

    def test_mass_integrates_domain_volume(self):
        grid = build_grid(1, 1.5, 2)
        fem = assemble(grid)
        ones = np.ones(grid.N + 2)
        self.assertAlmostEqual(float(ones @ (fem.full_mass @ ones)), 2.0 * grid.L, places=12)

    def test_stiffness_kernel_is_constants(self):
        grid = build_grid(1, 1.0, 2)
        fem = assemble(grid)
        np.testing.assert_allclose(fem.full_stiffness @ np.ones(grid.N + 2), 0.0, atol=1e-12)

    def test_quadratic_forms_match_direct_integration(self):
        grid = build_grid(1, 1.0, 3)
        fem = assemble(grid)
        rng = np.random.default_rng(3)
        field = Field(grid, rng.standard_normal(grid.N), "zero")
        l2, semi = simplex_norms(field)
        c = field.coeffs
        self.assertAlmostEqual(float(c @ (fem.mass @ c)), l2, places=10)
        self.assertAlmostEqual(float(c @ (fem.stiffness @ c)), semi, places=10)

    def test_quadrature_is_exact_on_polynomials(self):
        grid = build_grid(1, 1.0, 2)
        rule = simplex_quadrature(grid, 3)
        self.assertAlmostEqual(float(rule.weights.sum()), 2.0 * grid.L, places=12)
        x, y = rule.points[:, 0], rule.points[:, 1]
        self.assertAlmostEqual(float(rule.weights @ (x**4 * y)), (2.0 * grid.L**5 / 5.0) * 0.5, places=12)

    def test_gradient_operator_of_ramp(self):
        grid = build_grid(1, 1.0, 2)
        fem = assemble(grid)
        dx, dy = gradient_operators(grid)
        ext = fem.ramp_field.extended()
        np.testing.assert_allclose(dx @ ext, 1.0 / grid.L, atol=1e-12)
        np.testing.assert_allclose(dy @ ext, 0.0, atol=1e-12)


class FieldTests(unittest.TestCase):
    def test_rejects_wrong_length(self):
        grid = build_grid(0, 2.0, 2)
        with self.assertRaises(InvalidParameters):
            Field(grid, np.zeros(3))

    def test_coefficients_are_read_only(self):
        grid = build_grid(0, 2.0, 2)
        field = Field(grid, np.zeros(grid.N))
        with self.assertRaises(ValueError):
            field.coeffs[0] = 1.0

    def test_interpolation_reproduces_nodes_and_boundary(self):
        grid = build_grid(1, 1.0, 2)
        field = nodal_field(grid, lambda z: z[:, 0] + 2.0 * z[:, 1], "zero")
        coords = grid.node_coordinates()
        np.testing.assert_allclose(interpolate(field, coords), field.coeffs, atol=1e-12)
        self.assertEqual(field(np.array([1.5, 0.5])), 0.0)
        self.assertAlmostEqual(field(np.array([0.25, 0.25])), 0.25 + 0.5, places=12)

    def test_dict_roundtrip(self):
        grid = build_grid(0, 2.0, 2)
        field = Field(grid, np.linspace(-0.5, 0.5, grid.N))
        clone = Field.from_dict(field.to_dict())
        self.assertEqual(clone.grid, grid)
        np.testing.assert_array_equal(clone.coeffs, field.coeffs)

    def test_from_dict_reports_missing_keys(self):
        with self.assertRaises(InvalidParameters):
            Field.from_dict({"d": 0, "L": 2.0})


class TriangulationTests(unittest.TestCase):
    def test_cube_split_preserves_volume(self):
        grid = build_grid(2, 1.0, 2)
        simplices = subdivide_cube(grid, [0.0, 0.0, 0.0])
        self.assertEqual(len(simplices), math.factorial(3))
        total = sum(simplex_volume(s) for s in simplices)
        self.assertAlmostEqual(total, grid.a**3, places=14)

    def test_cube_corner_must_be_lattice_point(self):
        grid = build_grid(1, 1.0, 2)
        with self.assertRaises(InvalidParameters):
            subdivide_cube(grid, [0.1, 0.0])
        with self.assertRaises(InvalidParameters):
            subdivide_cube(grid, [0.0, 1.0])


class EigenTests(unittest.TestCase):
    def test_mass_floor_scales_with_cell_volume(self):
        for d in (0, 1):
            grid = build_grid(d, 1.0, 4)
            self.assertGreaterEqual(mass_eigen_floor(grid), unit_cube_mass_floor(d) * grid.a**grid.D * (1 - 1e-10))

    def test_one_dimensional_mass_floor_is_a_third(self):
        for n in (2, 4, 8):
            grid = build_grid(0, 2.0, n)
            self.assertAlmostEqual(mass_floor(grid), grid.a / 3.0, places=12)
            self.assertGreater(unit_cube_mass_floor(0) * grid.a, 0.0)
            self.assertLess(unit_cube_mass_floor(0) * grid.a, mass_floor(grid))
            self.assertGreaterEqual(mass_eigen_floor(grid), grid.a / 3.0)

    def test_mass_floor_falls_back_to_cube_bound(self):
        grid = build_grid(1, 1.0, 4)
        self.assertAlmostEqual(mass_floor(grid), unit_cube_mass_floor(1) * grid.a**2, places=14)

    def test_stiffness_eigenvalue_one_dimension(self):
        grid = build_grid(0, 2.0, 4)
        fem = assemble(grid)
        N, a = grid.N, grid.a
        expected = 4.0 / a * math.sin(math.pi / (2 * (N + 1))) ** 2
        self.assertAlmostEqual(smallest_generalized_eigenvalue(fem.stiffness), expected, places=10)

    def test_dump_matrices_writes_market_files(self):
        grid = build_grid(0, 2.0, 2)
        with tempfile.TemporaryDirectory() as tmp:
            stiffness, mass = dump_matrices(assemble(grid), os.path.join(tmp, "lattice.mtx"))
            self.assertTrue(stiffness.exists())
            self.assertTrue(mass.read_text().startswith("%%MatrixMarket"))


if __name__ == "__main__":
    unittest.main()
