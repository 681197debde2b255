"""Lattice domain, piecewise-linear fields and exact P1 finite-element matrices."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import permutations
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, factorized
from scipy.special import roots_jacobi

from ..config import EIGEN_MAX_DOF, EIGEN_MAX_ITER, EIGEN_TOL
from ..errors import BoundViolation, InvalidGrid, InvalidParameters, NoConvergence

logger = logging.getLogger(__name__)

BOUNDARY_KINDS = ("ramp", "zero")
DENSE_EIGEN_LIMIT = 400


@dataclass(frozen=True)
class GridSpec:
    """Lattice D_{L,a} with a = 1/n; L is snapped to a multiple of a."""

    d: int
    L: float
    n: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 0:
            raise InvalidGrid(f"transverse dimension must be a nonnegative integer, got {self.d}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidGrid(f"n must be an integer >= 2, got {self.n}")
        if self.L < 2.0 / self.n:
            raise InvalidGrid(f"L = {self.L} < 2a = {2.0 / self.n}: no interior x-nodes")
        floor_la = int(math.floor(self.L * self.n + 1e-9))
        if floor_la < 2:
            raise InvalidGrid(f"floor(L/a) = {floor_la} < 2: no interior x-nodes")
        snapped = floor_la / self.n
        if abs(snapped - self.L) > 1e-12:
            logger.warning("snapping L=%.6g to floor(L/a)*a=%.6g", self.L, snapped)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(snapped))

    @property
    def a(self) -> float:
        return 1.0 / self.n

    @property
    def D(self) -> int:
        return self.d + 1

    @property
    def floor_La(self) -> int:
        return int(round(self.L * self.n))

    @property
    def nx(self) -> int:
        return 2 * self.floor_La - 1

    @property
    def transverse_size(self) -> int:
        return (self.n + 1) ** self.d

    @property
    def N(self) -> int:
        return self.nx * self.transverse_size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) + (self.n + 1,) * self.d

    @property
    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.floor_La - 1)) * self.a

    @property
    def simplex_volume(self) -> float:
        return self.a**self.D / math.factorial(self.D)

    def node_index(self, multi_index) -> int:
        """Flat index of lattice node (i_x, j_1, ..., j_d), x slowest."""
        return int(np.ravel_multi_index(tuple(int(i) for i in multi_index), self.shape))

    def node_multi_index(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(index), self.shape))

    def node_coordinates(self) -> np.ndarray:
        axes = [self.x_nodes] + [np.arange(self.n + 1) * self.a] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "L": self.L,
            "n": self.n,
            "a": self.a,
            "floor_La": self.floor_La,
            "N": self.N,
        }


def build_grid(d: int, L: float, n: int) -> GridSpec:
    grid = GridSpec(d, L, n)
    logger.debug("grid d=%d L=%.6g n=%d N=%d", grid.d, grid.L, grid.n, grid.N)
    return grid


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal coefficients plus boundary kind; evaluates as P1 interpolant."""

    grid: GridSpec
    coeffs: np.ndarray
    boundary: str = "ramp"

    def __post_init__(self):
        if self.boundary not in BOUNDARY_KINDS:
            raise InvalidParameters(f"boundary must be one of {BOUNDARY_KINDS}, got {self.boundary!r}")
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != self.grid.N:
            raise InvalidParameters(f"expected {self.grid.N} coefficients, got {coeffs.size}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def boundary_values(self) -> tuple[float, float]:
        return (-1.0, 1.0) if self.boundary == "ramp" else (0.0, 0.0)

    def extended(self) -> np.ndarray:
        return np.concatenate([self.coeffs, self.boundary_values])

    def with_coeffs(self, coeffs, boundary: str | None = None) -> Field:
        return Field(self.grid, coeffs, boundary or self.boundary)

    def __call__(self, points):
        return interpolate(self, points)

    def to_dict(self) -> dict:
        return {
            "d": self.grid.d,
            "L": self.grid.L,
            "n": self.grid.n,
            "boundary": self.boundary,
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Field:
        try:
            grid = build_grid(int(data["d"]), float(data["L"]), int(data["n"]))
            return cls(grid, data["coeffs"], data.get("boundary", "ramp"))
        except KeyError as exc:
            raise InvalidParameters(f"field JSON missing key {exc}") from exc


def nodal_field(grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray], boundary: str = "ramp") -> Field:
    """Sample fn(coords) at the lattice nodes."""
    return Field(grid, fn(grid.node_coordinates()), boundary)


@lru_cache(maxsize=None)
def _kuhn_permutations(D: int) -> tuple[tuple[int, ...], ...]:
    return tuple(permutations(range(D)))


@lru_cache(maxsize=None)
def _kuhn_offsets(D: int) -> np.ndarray:
    """Vertex offsets (P, D+1, D) of the Kuhn simplices of the unit cube."""
    perms = _kuhn_permutations(D)
    offsets = np.zeros((len(perms), D + 1, D), dtype=int)
    for p, perm in enumerate(perms):
        for k in range(1, D + 1):
            offsets[p, k] = offsets[p, k - 1]
            offsets[p, k, perm[k - 1]] += 1
    return offsets


@lru_cache(maxsize=None)
def _reference_gradients(D: int) -> np.ndarray:
    """Barycentric gradients (P, D+1, D) on the unit cube's Kuhn simplices."""
    perms = _kuhn_permutations(D)
    grads = np.zeros((len(perms), D + 1, D))
    for p, perm in enumerate(perms):
        grads[p, 0, perm[0]] = -1.0
        for k in range(1, D):
            grads[p, k, perm[k - 1]] += 1.0
            grads[p, k, perm[k]] -= 1.0
        grads[p, D, perm[D - 1]] = 1.0
    return grads


def _element_mass(D: int) -> np.ndarray:
    return (np.ones((D + 1, D + 1)) + np.eye(D + 1)) / ((D + 1) * (D + 2))


def _extended_index(grid: GridSpec, cells: np.ndarray) -> np.ndarray:
    """Map extended lattice cells (..., D) with x-index e in [0, 2K] to extended dof indices."""
    e = cells[..., 0]
    if grid.d:
        flat_y = np.ravel_multi_index(tuple(cells[..., k] for k in range(1, grid.D)), (grid.n + 1,) * grid.d)
    else:
        flat_y = np.zeros_like(e)
    interior = (np.clip(e, 1, 2 * grid.floor_La - 1) - 1) * grid.transverse_size + flat_y
    return np.where(e <= 0, grid.N, np.where(e >= 2 * grid.floor_La, grid.N + 1, interior))


@lru_cache(maxsize=16)
def _simplex_table(grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extended vertex indices (S, D+1), physical vertex coordinates (S, D+1, D) and permutation ids (S,)."""
    D = grid.D
    ranges = [2 * grid.floor_La] + [grid.n] * grid.d
    corners = np.indices(ranges).reshape(D, -1).T
    offsets = _kuhn_offsets(D)
    P = offsets.shape[0]
    cells = corners[:, None, None, :] + offsets[None, :, :, :]
    cells = cells.reshape(-1, D + 1, D)
    vertices = _extended_index(grid, cells)
    coords = cells.astype(float) * grid.a
    coords[..., 0] -= grid.L
    perm_ids = np.tile(np.arange(P), corners.shape[0])
    return vertices, coords, perm_ids


@dataclass(frozen=True, eq=False)
class FemMatrices:
    grid: GridSpec
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    full_stiffness: sp.csr_matrix
    full_mass: sp.csr_matrix
    ramp_field: Field
    ramp_energy: float

    @cached_property
    def h1(self) -> sp.csr_matrix:
        return (self.stiffness + self.mass).tocsr()

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.asarray(self.mass.sum(axis=1)).ravel()


def _scatter(grid: GridSpec, vertices: np.ndarray, values: np.ndarray) -> sp.csr_matrix:
    D1 = vertices.shape[1]
    rows = np.repeat(vertices[:, :, None], D1, axis=2)
    cols = np.repeat(vertices[:, None, :], D1, axis=1)
    size = grid.N + 2
    matrix = sp.coo_matrix((values.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()
    return ((matrix + matrix.T) * 0.5).tocsr()


@lru_cache(maxsize=16)
def assemble(grid: GridSpec) -> FemMatrices:
    D = grid.D
    vertices, _, perm_ids = _simplex_table(grid)
    grads = _reference_gradients(D)
    k_local = np.einsum("pik,pjk->pij", grads, grads) * grid.a ** (D - 2) / math.factorial(D)
    m_local = _element_mass(D) * grid.simplex_volume

    full_stiffness = _scatter(grid, vertices, k_local[perm_ids])
    full_mass = _scatter(grid, vertices, np.broadcast_to(m_local, (len(vertices), D + 1, D + 1)))
    N = grid.N
    ramp = nodal_field(grid, lambda z: z[:, 0] / grid.L, "ramp")
    logger.info("assembled P1 matrices d=%d N=%d nnz=%d", grid.d, N, full_stiffness.nnz)
    return FemMatrices(
        grid=grid,
        stiffness=full_stiffness[:N, :N].tocsr(),
        mass=full_mass[:N, :N].tocsr(),
        full_stiffness=full_stiffness,
        full_mass=full_mass,
        ramp_field=ramp,
        ramp_energy=2.0 / grid.L,
    )


@lru_cache(maxsize=None)
def _reference_rule(D: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the unit simplex: barycentric points (R, D+1), weights summing to 1/D!."""
    nodes, weights = [], []
    for j in range(1, D + 1):
        alpha = D - j
        t, w = roots_jacobi(order, alpha, 0.0)
        nodes.append((t + 1.0) / 2.0)
        weights.append(w / 2.0 ** (alpha + 1))
    u = np.stack([g.ravel() for g in np.meshgrid(*nodes, indexing="ij")], axis=1)
    w = np.prod(np.stack([g.ravel() for g in np.meshgrid(*weights, indexing="ij")], axis=1), axis=1)
    s = np.empty_like(u)
    remaining = np.ones(len(u))
    for j in range(D):
        s[:, j] = remaining * u[:, j]
        remaining = remaining * (1.0 - u[:, j])
    bary = np.column_stack([1.0 - s.sum(axis=1), s])
    return bary, w


@dataclass(frozen=True, eq=False)
class SimplexQuadrature:
    grid: GridSpec
    order: int
    points: np.ndarray
    weights: np.ndarray
    interp: sp.csr_matrix
    simplex: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @cached_property
    def interior_transpose(self) -> sp.csr_matrix:
        return self.interp[:, : self.grid.N].T.tocsr()

    def values(self, extended: np.ndarray) -> np.ndarray:
        return self.interp @ extended


@lru_cache(maxsize=16)
def simplex_quadrature(grid: GridSpec, order: int) -> SimplexQuadrature:
    """Per-simplex rule exact for polynomials of degree 2*order - 1 on every Kuhn simplex."""
    vertices, coords, _ = _simplex_table(grid)
    bary, w = _reference_rule(grid.D, order)
    S, R = len(vertices), len(w)
    points = np.einsum("rk,skd->srd", bary, coords).reshape(S * R, grid.D)
    weights = np.tile(w * grid.a**grid.D, S)
    rows = np.repeat(np.arange(S * R), grid.D + 1)
    cols = np.repeat(vertices, R, axis=0).ravel()
    vals = np.tile(bary, (S, 1)).ravel()
    interp = sp.csr_matrix((vals, (rows, cols)), shape=(S * R, grid.N + 2))
    return SimplexQuadrature(grid, order, points, weights, interp, np.repeat(np.arange(S), R))


@lru_cache(maxsize=16)
def gradient_operators(grid: GridSpec) -> tuple[sp.csr_matrix, ...]:
    """One (S, N+2) matrix per coordinate mapping extended values to per-simplex partial derivatives."""
    vertices, _, perm_ids = _simplex_table(grid)
    grads = _reference_gradients(grid.D)[perm_ids] / grid.a
    S = len(vertices)
    rows = np.repeat(np.arange(S), grid.D + 1)
    ops = []
    for k in range(grid.D):
        ops.append(
            sp.csr_matrix((grads[:, :, k].ravel(), (rows, vertices.ravel())), shape=(S, grid.N + 2))
        )
    return tuple(ops)


@lru_cache(maxsize=16)
def h1_solver(grid: GridSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU solve with Lambda + I."""
    return factorized(assemble(grid).h1.tocsc())


def simplex_norms(field: Field) -> tuple[float, float]:
    """Direct per-simplex integration of (||u||^2_{L2}, ||grad u||^2_{L2}) over D_L."""
    grid = field.grid
    vertices, _, _ = _simplex_table(grid)
    local = field.extended()[vertices]
    D1 = grid.D + 1
    l2 = grid.simplex_volume / (D1 * (D1 + 1)) * np.sum((local**2).sum(axis=1) + local.sum(axis=1) ** 2)
    ext = field.extended()
    semi = grid.simplex_volume * sum(float(np.sum((op @ ext) ** 2)) for op in gradient_operators(grid))
    return float(l2), float(semi)


def interpolate(field: Field, points):
    """Barycentric interpolation in the containing Kuhn simplex; constant boundary values beyond |x| = L."""
    grid = field.grid
    single = np.ndim(points) <= 1
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.D:
        raise InvalidParameters(f"points must have {grid.D} coordinates")
    D, K = grid.D, grid.floor_La
    z = pts / grid.a
    z[:, 0] += K
    corner = np.floor(z).astype(int)
    corner[:, 0] = np.clip(corner[:, 0], 0, 2 * K - 1)
    if grid.d:
        corner[:, 1:] = np.clip(corner[:, 1:], 0, grid.n - 1)
    t = np.clip(z - corner, 0.0, 1.0)
    order = np.argsort(-t, axis=1, kind="stable")
    ts = np.take_along_axis(t, order, axis=1)
    lam = np.empty((len(pts), D + 1))
    lam[:, 0] = 1.0 - ts[:, 0]
    lam[:, 1:D] = ts[:, :-1] - ts[:, 1:]
    lam[:, D] = ts[:, -1]

    ext = field.extended()
    vertex = corner.copy()
    values = lam[:, 0] * ext[_extended_index(grid, vertex)]
    rows = np.arange(len(pts))
    for k in range(1, D + 1):
        vertex[rows, order[:, k - 1]] += 1
        values = values + lam[:, k] * ext[_extended_index(grid, vertex)]
    left, right = field.boundary_values
    values = np.where(pts[:, 0] <= -grid.L, left, np.where(pts[:, 0] >= grid.L, right, values))
    return float(values[0]) if single else values


def subdivide_cube(grid: GridSpec, cube_corner) -> list[np.ndarray]:
    """Kuhn triangulation of the lattice cube with the given lower corner: (d+1)! vertex arrays."""
    corner = np.asarray(cube_corner, dtype=float).reshape(-1)
    if corner.size != grid.D:
        raise InvalidParameters(f"cube corner must have {grid.D} coordinates")
    cells = corner / grid.a
    if np.any(np.abs(cells - np.round(cells)) > 1e-9):
        raise InvalidParameters("cube corner is not a lattice point")
    cells = np.round(cells).astype(int)
    K = grid.floor_La
    if not -(K + 1) <= cells[0] <= K or np.any(cells[1:] < 0) or np.any(cells[1:] > grid.n - 1):
        raise InvalidParameters("cube leaves the extended cuboid")
    return [corner + grid.a * offsets for offsets in _kuhn_offsets(grid.D)]


def simplex_volume(vertices: np.ndarray) -> float:
    vertices = np.asarray(vertices, dtype=float)
    D = vertices.shape[1]
    if D == 0:
        return 1.0
    return abs(float(np.linalg.det(vertices[1:] - vertices[0]))) / math.factorial(D)


@lru_cache(maxsize=None)
def unit_cube_mass_floor(d: int) -> float:
    """Smallest eigenvalue of the mass matrix of one unit cube assembled from its Kuhn simplices."""
    D = d + 1
    offsets = _kuhn_offsets(D)
    local_index = np.ravel_multi_index(tuple(offsets[..., k] for k in range(D)), (2,) * D)
    cube = np.zeros((2**D, 2**D))
    m_local = _element_mass(D) / math.factorial(D)
    for p in range(offsets.shape[0]):
        idx = local_index[p]
        cube[np.ix_(idx, idx)] += m_local
    return float(np.linalg.eigvalsh(cube)[0])


def smallest_generalized_eigenvalue(A: sp.spmatrix, B: sp.spmatrix | None = None, seed: int = 0) -> float:
    """Smallest eigenvalue of A x = mu B x by shift-invert iteration at zero."""
    size = A.shape[0]
    if size <= DENSE_EIGEN_LIMIT:
        dense_b = None if B is None else B.toarray()
        return float(sla.eigh(A.toarray(), dense_b, eigvals_only=True, subset_by_index=[0, 0])[0])
    v0 = np.random.default_rng(seed).standard_normal(size)
    try:
        values = eigsh(A.tocsc(), k=1, M=None if B is None else B.tocsc(), sigma=0.0, which="LM",
                       v0=v0, tol=EIGEN_TOL, maxiter=EIGEN_MAX_ITER, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise NoConvergence(f"eigen solve did not converge after {EIGEN_MAX_ITER} iterations") from exc
    return float(values[0])


def mass_floor(grid: GridSpec) -> float:
    """Certified lower bound on the smallest eigenvalue of the consistent mass matrix.

    The larger of the per-cube floor and the Gershgorin bound min_i (2 M_ii - sum_j M_ij),
    valid because every mass entry is nonnegative. At d = 0 the Gershgorin bound is a/3;
    the per-cube floor alone gives a/6 there. From D = 2 on the Gershgorin bound is not
    positive and the per-cube floor decides.
    """
    mass = assemble(grid).mass
    gershgorin = float(np.min(2.0 * mass.diagonal() - np.asarray(mass.sum(axis=1)).ravel()))
    return max(unit_cube_mass_floor(grid.d) * grid.a**grid.D, gershgorin)


def mass_eigen_floor(grid: GridSpec) -> float:
    if grid.N > EIGEN_MAX_DOF:
        raise InvalidParameters(f"N={grid.N} exceeds {EIGEN_MAX_DOF} for the mass eigen solve")
    value = smallest_generalized_eigenvalue(assemble(grid).mass)
    floor = mass_floor(grid)
    if value < floor * (1.0 - 1e-10):
        raise BoundViolation(f"mass eigenvalue {value:.6e} below certified floor {floor:.6e}")
    logger.debug("mass eigen floor %.6e (certified floor %.6e)", value, floor)
    return value


def dump_matrices(fem: FemMatrices, path: str | Path) -> tuple[Path, Path]:
    """Write stiffness and mass in Matrix Market format next to path."""
    path = Path(path)
    stem = path.with_suffix("")
    stiffness_path = stem.parent / f"{stem.name}_stiffness.mtx"
    mass_path = stem.parent / f"{stem.name}_mass.mtx"
    mmwrite(str(stiffness_path), fem.stiffness, symmetry="symmetric")
    mmwrite(str(mass_path), fem.mass, symmetry="symmetric")
    return stiffness_path, mass_path
