"""Free-energy functional, its gradient and landscape / slice inequality checks."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ..config import DELTA_0, DELTA_3, LANDSCAPE_SLACK_CONST, ORTHOGONALITY_TOL, PROBE_MAX_ITER, WORKERS
from ..errors import AmbiguousProjection, LabError, NoConvergence, PreconditionViolation, ProbeFailure
from .mesh import Field, GridSpec, assemble, build_grid, gradient_operators, h1_solver, simplex_quadrature
from .scalar_theory import (
    PotentialSpec,
    ProfileSpec,
    cutoff_profile,
    make_quartic_potential,
    profile_field,
    solve_profile,
    surface_tension,
)
from .tubular import dist_to_manifold, project, tangent_functional, tangent_norm_sq

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyReport:
    gradient_part: float
    potential_part: float
    total_raw: float
    free_energy: float

    def to_dict(self) -> dict:
        return asdict(self)


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool
    slack: float = 0.0


class ProbeResult(NamedTuple):
    c0_estimate: float
    minimizing_field: Field
    min_energy: float
    delta: float
    restart_energies: tuple[float, ...]


def quadrature_order(potential: PotentialSpec) -> int:
    """Points per collapsed direction making int F(h) and int F'(h) phi exact for P1 h."""
    return max(1, math.ceil((potential.degree + 1) / 2))


def raw_energy_parts(field: Field, potential: PotentialSpec) -> tuple[float, float]:
    """(1/2 int |grad h|^2, int F(h)) over D_L."""
    fem = assemble(field.grid)
    rule = simplex_quadrature(field.grid, quadrature_order(potential))
    ext = field.extended()
    gradient_part = 0.5 * float(ext @ (fem.full_stiffness @ ext))
    potential_part = float(rule.weights @ potential.eval(rule.values(ext)))
    return gradient_part, potential_part


def raw_energy_and_gradient(field: Field, potential: PotentialSpec) -> tuple[float, np.ndarray]:
    grid = field.grid
    fem = assemble(grid)
    rule = simplex_quadrature(grid, quadrature_order(potential))
    ext = field.extended()
    stiff = fem.full_stiffness @ ext
    values = rule.values(ext)
    total = 0.5 * float(ext @ stiff) + float(rule.weights @ potential.eval(values))
    gradient = stiff[: grid.N] + rule.interior_transpose @ (rule.weights * potential.d1(values))
    return total, gradient


def free_energy(field: Field, potential: PotentialSpec) -> EnergyReport:
    if field.boundary != "ramp":
        raise PreconditionViolation("free energy needs a ramp-boundary field")
    gradient_part, potential_part = raw_energy_parts(field, potential)
    total = gradient_part + potential_part
    return EnergyReport(gradient_part, potential_part, total, total - surface_tension(potential))


def energy_gradient(field: Field, potential: PotentialSpec) -> np.ndarray:
    """d total_raw / d h_z for every interior node z."""
    return raw_energy_and_gradient(field, potential)[1]


def _orthogonality_ok(inner: float, v_norm: float, tangent_norm: float) -> bool:
    return abs(inner) <= ORTHOGONALITY_TOL * max(v_norm * tangent_norm, 1e-300)


def random_admissible_perturbation(
    grid: GridSpec,
    xi: float,
    rng: np.random.Generator,
    profile: ProfileSpec,
    l2: float | None = None,
) -> Field:
    """Smooth zero-boundary v with <v, m'_xi> = 0, ||v||_{L2} = l2 (random up to DELTA_3) and |v| <= 1."""
    fem = assemble(grid)
    w = h1_solver(grid)(fem.mass @ rng.standard_normal(grid.N))
    b = tangent_functional(grid, profile, xi)
    w = w - (b @ w) / (b @ b) * b
    target = rng.uniform(0.2, 1.0) * DELTA_3 if l2 is None else l2
    w *= target / math.sqrt(float(w @ (fem.mass @ w)))
    peak = float(np.max(np.abs(w)))
    if peak > 1.0:
        w /= peak
    return Field(grid, w, "zero")


def landscape_upper_check(
    xi: float,
    v: Field,
    potential: PotentialSpec,
    grid: GridSpec,
    eps: float | None = None,
    lambda1: float | None = None,
    profile: ProfileSpec | None = None,
    slack_const: float = LANDSCAPE_SLACK_CONST,
    cutoff_scale: float = 1.0,
) -> BoundCheck:
    """F(carrier + v) <= c3 ||v||^2_{H1} + slack_const * a^2.

    The carrier is the cutoff profile of radius cutoff_scale * eps^-lambda1 when eps and
    lambda1 are given, m_xi otherwise.
    """
    if v.boundary != "zero" or v.grid != grid:
        raise PreconditionViolation("perturbation must be a zero-boundary field on the same grid")
    profile = profile or solve_profile(potential)
    fem = assemble(grid)
    coeffs = v.coeffs
    l2 = math.sqrt(float(coeffs @ (fem.mass @ coeffs)))
    if l2 > DELTA_3 * (1.0 + 1e-12):
        raise PreconditionViolation(f"||v||_L2 = {l2:.4g} exceeds {DELTA_3}")
    if coeffs.size and float(np.max(np.abs(coeffs))) > 1.0:
        raise PreconditionViolation("||v||_inf exceeds 1")
    inner = float(tangent_functional(grid, profile, xi) @ coeffs)
    if not _orthogonality_ok(inner, l2, math.sqrt(tangent_norm_sq(grid, profile, xi))):
        raise PreconditionViolation(f"v is not orthogonal to the tangent (inner product {inner:.3e})")

    if eps is not None and lambda1 is not None:
        carrier = cutoff_profile(xi, eps, lambda1, grid, profile, scale=cutoff_scale)
    else:
        carrier = profile_field(profile, xi, grid)
    lhs = free_energy(carrier.with_coeffs(carrier.coeffs + coeffs), potential).free_energy
    rhs = potential.c3 * float(coeffs @ (fem.h1 @ coeffs))
    slack = slack_const * grid.a**2
    return BoundCheck(lhs, rhs, lhs <= rhs + slack, slack)


def _rescale_to_distance(coeffs, delta, grid, profile, xi) -> tuple[np.ndarray, float]:
    """Radial rescaling about the nodal profile until dist(h, M) = delta."""
    for _ in range(8):
        coords = project(Field(grid, coeffs), profile, xi0=xi)
        xi = coords.xi
        if abs(coords.manifold_dist - delta) <= 1e-6 * delta:
            break
        center = profile_field(profile, xi, grid).coeffs
        coeffs = center + (delta / coords.manifold_dist) * (coeffs - center)
    return coeffs, xi


def _probe_descent(delta, potential, grid, profile, rng, max_iter) -> tuple[float, Field]:
    window = max(grid.L / 4.0 - 1.0, 0.0)
    xi = float(rng.uniform(-window, window))
    start = profile_field(profile, xi, grid).coeffs
    start = start + random_admissible_perturbation(grid, xi, rng, profile, l2=delta).coeffs
    h, xi = _rescale_to_distance(start, delta, grid, profile, xi)
    energy = free_energy(Field(grid, h), potential).free_energy
    solve = h1_solver(grid)
    step = 1.0
    for iteration in range(max_iter):
        direction = -solve(energy_gradient(Field(grid, h), potential))
        previous = energy
        while step > 1e-10:
            try:
                trial, trial_xi = _rescale_to_distance(h + step * direction, delta, grid, profile, xi)
            except (NoConvergence, AmbiguousProjection):
                step *= 0.5
                continue
            trial_energy = free_energy(Field(grid, trial), potential).free_energy
            if trial_energy < energy:
                h, xi, energy = trial, trial_xi, trial_energy
                step = min(step * 2.0, 1e3)
                break
            step *= 0.5
        if previous - energy <= 1e-12 * max(1.0, abs(energy)):
            logger.debug("probe converged after %d iterations at F=%.6e", iteration, energy)
            break
    return energy, Field(grid, h)


def landscape_lower_probe(
    delta: float,
    potential: PotentialSpec,
    grid: GridSpec,
    trials: int = 5,
    seed: int = 0,
    profile: ProfileSpec | None = None,
    max_iter: int = PROBE_MAX_ITER,
) -> ProbeResult:
    """min F over dist(h, M) = delta by preconditioned descent on the tube boundary; c0 = min F / delta^2."""
    if not 0.0 < delta <= DELTA_0:
        raise PreconditionViolation(f"delta must lie in (0, {DELTA_0}], got {delta}")
    profile = profile or solve_profile(potential)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    results: dict[int, tuple[float, Field]] = {}
    with ThreadPoolExecutor(max_workers=max(1, min(WORKERS, trials))) as executor:
        future_map = {
            executor.submit(
                _probe_descent, delta, potential, grid, profile, np.random.default_rng(s), max_iter
            ): idx
            for idx, s in enumerate(seeds)
        }
        for future in as_completed(future_map):
            idx = future_map[future]
            try:
                results[idx] = future.result()
            except LabError as exc:
                logger.warning("probe restart %d failed: %s", idx, exc)
    if not results:
        raise ProbeFailure(f"no feasible iterate found for delta={delta}")
    energies = tuple(results[i][0] for i in sorted(results))
    best = min(sorted(results), key=lambda i: results[i][0])
    energy, field = results[best]
    logger.info("lower probe delta=%.3g: min F=%.6e over %d restarts", delta, energy, len(results))
    return ProbeResult(energy / delta**2, field, energy, delta, energies)


def slice_distance_check(field: Field, profile: ProfileSpec | None = None) -> BoundCheck:
    """dist(h, M) <= min over lattice slices t of dist(h_t, M) + ||d_t h||."""
    grid = field.grid
    if grid.d < 1:
        raise PreconditionViolation("slice inequality needs a transverse dimension d >= 1")
    profile = profile or solve_profile(make_quartic_potential())
    lhs = dist_to_manifold(field, profile)
    slice_grid = build_grid(grid.d - 1, grid.L, grid.n)
    values = field.coeffs.reshape(grid.shape)
    slice_dist = min(
        dist_to_manifold(Field(slice_grid, values[..., k].ravel(), field.boundary), profile)
        for k in range(grid.n + 1)
    )
    dt = gradient_operators(grid)[grid.D - 1] @ field.extended()
    rhs = slice_dist + math.sqrt(grid.simplex_volume * float(dt @ dt))
    return BoundCheck(lhs, rhs, lhs <= rhs + 1e-8)
