"""Tubular coordinates around the manifold of translated profiles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.signal import argrelmin

from ..config import (
    AMBIGUITY_RATIO,
    DENOMINATOR_FLOOR,
    EXTERIOR_SPAN,
    NEWTON_MAX_STEPS,
    NEWTON_TOL,
    PROFILE_QUAD_ORDER,
)
from ..errors import AmbiguousProjection, DenominatorNearZero, NoConvergence, PreconditionViolation
from .mesh import Field, GridSpec, assemble, gradient_operators, h1_solver, simplex_quadrature
from .scalar_theory import ProfileSpec, make_quartic_potential, solve_profile

logger = logging.getLogger(__name__)

SCAN_CHUNK = 64


@dataclass(frozen=True, eq=False)
class TubularCoords:
    """Coordinates of h around the profile manifold.

    v is h minus the ramp-boundary nodal profile at xi. Both carry the ghost values
    -1 and +1, so v is an exact zero-boundary P1 field and dist = ||v||_{L2(D)}.
    manifold_dist is ||h - m_xi||_{L2(D)} against the smooth profile, the quantity
    Newton minimises; the two differ by the interpolation error of m_xi.
    """

    xi: float
    v: Field
    dist: float
    orth_residual: float
    denominator: float
    tangent_norm_sq: float
    manifold_dist: float

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "dist": self.dist,
            "manifold_dist": self.manifold_dist,
            "orth_residual": self.orth_residual,
        }


class CutoffErrors(NamedTuple):
    l2: float
    dx: float
    h1: float


class FermiGradient(NamedTuple):
    analytic: np.ndarray
    norm_bound: float
    denominator: float
    xi: float


class NormalCheck(NamedTuple):
    sup_norm: float
    tangent_norm: float
    passed: bool


def _default_profile() -> ProfileSpec:
    return solve_profile(make_quartic_potential())


@lru_cache(maxsize=16)
def _exterior_rule(L: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite 5-point Gauss-Legendre nodes on [L, L + span] with unit panels."""
    t, w = np.polynomial.legendre.leggauss(5)
    panels = np.arange(int(EXTERIOR_SPAN))
    x = (L + panels[:, None] + (t[None, :] + 1.0) / 2.0).ravel()
    return x, np.tile(w / 2.0, len(panels))


@lru_cache(maxsize=16)
def _profile_rule(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    core = simplex_quadrature(grid, PROFILE_QUAD_ORDER)
    xr, wr = _exterior_rule(grid.L)
    return np.concatenate([core.x, xr, -xr]), np.concatenate([core.weights, wr, wr])


def _samples(h: Field) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = h.grid
    core = simplex_quadrature(grid, PROFILE_QUAD_ORDER)
    x, w = _profile_rule(grid)
    left, right = h.boundary_values
    size = len(_exterior_rule(grid.L)[0])
    values = np.concatenate([core.values(h.extended()), np.full(size, right), np.full(size, left)])
    return x, w, values


def _moments(x, w, values, profile: ProfileSpec, xi: float) -> tuple[float, float, float, float]:
    """(g, r, r', ||m'||^2) at xi for g = ||h - m_xi||^2 and r = <h - m_xi, m'_xi>."""
    s = x - xi
    dm = profile.derivative(s)
    v = values - profile.value(s)
    tangent = float(w @ (dm * dm))
    g = float(w @ (v * v))
    r = float(w @ (v * dm))
    slope = tangent - float(w @ (v * profile.second_derivative(s)))
    return g, r, slope, tangent


def _scan(h: Field, profile: ProfileSpec) -> tuple[np.ndarray, np.ndarray]:
    """g on a xi-grid of step a using the transverse average of h."""
    grid = h.grid
    values = h.coeffs.reshape(grid.nx, -1)
    weights_1d = np.full(grid.n + 1, 1.0 / grid.n)
    weights_1d[[0, -1]] *= 0.5
    weights = np.ones(1)
    for _ in range(grid.d):
        weights = np.outer(weights, weights_1d).ravel()
    left, right = h.boundary_values
    nodes = np.concatenate([[-grid.L], grid.x_nodes, [grid.L]])
    averaged = np.concatenate([[left], values @ weights, [right]])

    t, wt = np.polynomial.legendre.leggauss(5)
    u = (t + 1.0) / 2.0
    xq = (nodes[:-1, None] + grid.a * u[None, :]).ravel()
    hq = (averaged[:-1, None] * (1.0 - u) + averaged[1:, None] * u).ravel()
    wq = np.tile(wt * grid.a / 2.0, len(nodes) - 1)
    xr, wr = _exterior_rule(grid.L)
    xq = np.concatenate([xq, xr, -xr])
    hq = np.concatenate([hq, np.full(len(xr), right), np.full(len(xr), left)])
    wq = np.concatenate([wq, wr, wr])

    if grid.L - 1.0 > grid.a:
        xis = np.arange(-grid.L + 1.0, grid.L - 1.0 + grid.a / 2.0, grid.a)
    else:
        xis = np.linspace(-grid.L / 2.0, grid.L / 2.0, 5)
    g = np.empty(len(xis))
    for start in range(0, len(xis), SCAN_CHUNK):
        block = xis[start : start + SCAN_CHUNK]
        diff = hq[None, :] - profile.value(xq[None, :] - block[:, None])
        g[start : start + SCAN_CHUNK] = (diff * diff) @ wq
    return xis, g


def _basins(g: np.ndarray) -> list[int]:
    """Scan indices of local minima, best first."""
    best = int(np.argmin(g))
    candidates = set(int(i) for i in argrelmin(g, mode="clip")[0]) | {best}
    if len(g) > 1 and g[0] < g[1]:
        candidates.add(0)
    if len(g) > 1 and g[-1] < g[-2]:
        candidates.add(len(g) - 1)
    return sorted(candidates, key=lambda i: (g[i], i))


def _newton(x, w, values, profile: ProfileSpec, xi: float) -> tuple[float, float, float, float, float]:
    for _ in range(NEWTON_MAX_STEPS):
        g, r, slope, tangent = _moments(x, w, values, profile, xi)
        if abs(r) <= NEWTON_TOL:
            if slope > 0.0:
                polished = xi - r / slope
                moments = _moments(x, w, values, profile, polished)
                if abs(moments[1]) <= abs(r):
                    return (polished,) + moments
            return xi, g, r, slope, tangent
        if slope <= 0.0:
            raise NoConvergence(f"orthogonality residual has nonpositive slope {slope:.3e} at xi={xi:.6g}")
        step = float(np.clip(r / slope, -1.0, 1.0))
        xi -= step
        if abs(step) <= 1e-15 * max(1.0, abs(xi)) and abs(r) <= 1e3 * NEWTON_TOL:
            g, r, slope, tangent = _moments(x, w, values, profile, xi)
            return xi, g, r, slope, tangent
    raise NoConvergence(f"projection did not converge after {NEWTON_MAX_STEPS} Newton steps")


def _nodal_fluctuation(h: Field, profile: ProfileSpec, xi: float) -> Field:
    return Field(h.grid, h.coeffs - profile.value(h.grid.node_coordinates()[:, 0] - xi), "zero")


def fluctuation_norm(v: Field) -> float:
    """||v||_{L2(D)} of a zero-boundary field; v vanishes outside D_L."""
    if v.boundary != "zero":
        raise PreconditionViolation("fluctuation norm needs a zero-boundary field")
    return math.sqrt(max(float(v.coeffs @ (assemble(v.grid).mass @ v.coeffs)), 0.0))


def project(h: Field, profile: ProfileSpec | None = None, xi0: float | None = None) -> TubularCoords:
    """Tubular coordinates of h; xi0 skips the scan and starts Newton there."""
    if h.boundary != "ramp":
        raise PreconditionViolation("tubular coordinates need a ramp-boundary field")
    profile = profile or _default_profile()
    x, w, values = _samples(h)
    if xi0 is None:
        xis, g = _scan(h, profile)
        basins = _basins(g)
        best = basins[0]
        rivals = [i for i in basins[1:] if abs(i - best) > 2]
        if rivals and g[rivals[0]] <= AMBIGUITY_RATIO * g[best]:
            raise AmbiguousProjection(
                f"scan minima at xi={xis[best]:.4g} and xi={xis[rivals[0]]:.4g} within "
                f"{(AMBIGUITY_RATIO - 1.0) * 100:.0f}%"
            )
        xi0 = float(xis[best])
    xi, g, r, slope, tangent = _newton(x, w, values, profile, float(xi0))
    v = _nodal_fluctuation(h, profile, xi)
    return TubularCoords(
        xi=float(xi),
        v=v,
        dist=fluctuation_norm(v),
        orth_residual=r,
        denominator=slope,
        tangent_norm_sq=tangent,
        manifold_dist=math.sqrt(max(g, 0.0)),
    )


def dist_to_manifold(h: Field, profile: ProfileSpec | None = None) -> float:
    """inf over xi of ||h - m_xi||_{L2(D)}, refined from the best scan basins."""
    profile = profile or _default_profile()
    x, w, values = _samples(h)
    xis, g = _scan(h, profile)
    step = xis[1] - xis[0] if len(xis) > 1 else h.grid.a
    best = math.inf
    for index in _basins(g)[:3]:
        try:
            _, value, _, _, _ = _newton(x, w, values, profile, float(xis[index]))
        except NoConvergence:
            lo, hi = xis[index] - step, xis[index] + step
            result = minimize_scalar(
                lambda xi: _moments(x, w, values, profile, xi)[0],
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10},
            )
            value = float(result.fun)
        best = min(best, value)
    return math.sqrt(max(best, 0.0))


def tangent_functional(grid: GridSpec, profile: ProfileSpec, xi: float) -> np.ndarray:
    """b with b . u = <P u, m'_xi>_{L2} for zero-boundary coefficient vectors u."""
    core = simplex_quadrature(grid, PROFILE_QUAD_ORDER)
    return core.interior_transpose @ (core.weights * profile.derivative(core.x - xi))


def tangent_norm_sq(grid: GridSpec, profile: ProfileSpec, xi: float) -> float:
    x, w = _profile_rule(grid)
    dm = profile.derivative(x - xi)
    return float(w @ (dm * dm))


def fermi_gradient(h: Field, profile: ProfileSpec | None = None, xi0: float | None = None) -> FermiGradient:
    """Gradient of the coordinate map h -> xi(h) and its discrete norm bound."""
    profile = profile or _default_profile()
    coords = project(h, profile, xi0)
    tangent = coords.tangent_norm_sq
    denominator = coords.denominator
    if abs(denominator) < DENOMINATOR_FLOOR * tangent:
        raise DenominatorNearZero(
            f"|{denominator:.3e}| < {DENOMINATOR_FLOOR} * ||m'||^2 = {DENOMINATOR_FLOOR * tangent:.3e}"
        )
    grid = h.grid
    analytic = -tangent_functional(grid, profile, coords.xi) / denominator
    norm_bound = 2.0**grid.D * grid.a ** (grid.D / 2.0) * math.sqrt(tangent) / abs(denominator)
    return FermiGradient(analytic, norm_bound, denominator, coords.xi)


def cutoff_errors(field: Field, profile: ProfileSpec, xi: float) -> CutoffErrors:
    """L2 error, d_x seminorm error and full H1 error of h against m_xi on D."""
    grid = field.grid
    x, w, values = _samples(field)
    s = x - xi
    l2 = float(w @ (values - profile.value(s)) ** 2)
    core = simplex_quadrature(grid, PROFILE_QUAD_ORDER)
    slope = (gradient_operators(grid)[0] @ field.extended())[core.simplex]
    slope = np.concatenate([slope, np.zeros(len(x) - len(slope))])
    dx = float(w @ (profile.derivative(s) - slope) ** 2)
    return CutoffErrors(math.sqrt(l2), math.sqrt(dx), math.sqrt(l2 + dx))


def cutoff_tangent_inner(field: Field, profile: ProfileSpec, xi: float) -> float:
    """<m_xi - h, m'_xi>_{L2(D)}."""
    x, w, values = _samples(field)
    s = x - xi
    return float(w @ ((profile.value(s) - values) * profile.derivative(s)))


def tangent_integral(profile: ProfileSpec) -> float:
    """int_R m'(x) dx."""
    right, _ = quad(lambda x: float(profile.derivative(x)), 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    left, _ = quad(lambda x: float(profile.derivative(x)), -np.inf, 0.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return right + left


def normal_vector_check(grid: GridSpec, profile: ProfileSpec, xi: float, eps: float, c3: float) -> NormalCheck:
    """Sigma-unit normal of the tangent functional, Sigma = (2 c3 / eps)(Lambda + I)."""
    b = tangent_functional(grid, profile, xi)
    y = h1_solver(grid)(b) * eps / (2.0 * c3)
    normal = y / math.sqrt(float(b @ y))
    sup_norm = float(np.max(np.abs(normal)))
    tangent_norm = float(np.linalg.norm(b))
    return NormalCheck(sup_norm, tangent_norm, sup_norm <= 1.0 and tangent_norm <= 2.0)
