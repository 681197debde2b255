"""One-dimensional ingredients: potential, transition profile, surface tension, cutoff profile."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad, solve_ivp

from ..config import (
    ODE_RTOL,
    ODE_XMAX,
    POTENTIAL_CONFIG,
    SURFACE_TENSION_TOL,
    TAIL_C1_INFLATION,
    TAIL_SAFETY,
    TAIL_SWITCH,
    detect_potential,
)
from ..errors import BoundViolation, InadmissiblePotential, InvalidExponents, InvalidParameters, PreconditionViolation
from .mesh import Field, GridSpec, nodal_field

logger = logging.getLogger(__name__)

POTENTIAL_KINDS = ("quartic", "custom")


def _sup_abs(poly: Polynomial, lo: float, hi: float) -> float:
    candidates = [lo, hi]
    for root in poly.deriv().roots():
        if abs(root.imag) < 1e-12 and lo <= root.real <= hi:
            candidates.append(float(root.real))
    return float(max(abs(poly(c)) for c in candidates))


@dataclass(frozen=True)
class PotentialSpec:
    """Polynomial bistable potential F; coefficients in ascending powers of u."""

    kind: str
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise InvalidParameters(f"potential kind must be one of {POTENTIAL_KINDS}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @cached_property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @cached_property
    def _derivatives(self) -> tuple[Polynomial, Polynomial, Polynomial]:
        p = self.polynomial
        return p.deriv(1), p.deriv(2), p.deriv(3)

    @property
    def degree(self) -> int:
        return max(len(self.coefficients) - 1, 0)

    def eval(self, u):
        return self.polynomial(u)

    def d1(self, u):
        return self._derivatives[0](u)

    def d2(self, u):
        return self._derivatives[1](u)

    def d3(self, u):
        return self._derivatives[2](u)

    @cached_property
    def sup_d2_on_unit(self) -> float:
        return _sup_abs(self._derivatives[1], -1.0, 1.0)

    @cached_property
    def sup_d3_on_double(self) -> float:
        return _sup_abs(self._derivatives[2], -2.0, 2.0)

    @property
    def c3(self) -> float:
        return 0.5 * self.sup_d2_on_unit + self.sup_d3_on_double

    @property
    def is_zero(self) -> bool:
        return not any(self.coefficients)

    def scaled(self, factor: float) -> PotentialSpec:
        return PotentialSpec("custom", tuple(factor * c for c in self.coefficients))


def check_admissible(potential: PotentialSpec) -> list[str]:
    """List the violated admissibility properties (empty when admissible)."""
    u = np.linspace(-3.0, 3.0, 6001)
    values = potential.eval(u)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    problems = []
    if abs(potential.eval(1.0)) > tol or abs(potential.eval(-1.0)) > tol:
        problems.append("F(+-1) must vanish")
    away = np.abs(np.abs(u) - 1.0) > 1e-3
    if np.any(values[away] <= 0.0):
        problems.append("F must be positive away from +-1")
    if np.max(np.abs(values - potential.eval(-u))) > tol:
        problems.append("F must be symmetric")
    for point in (0.0, 1.0, -1.0):
        if abs(potential.d1(point)) > tol:
            problems.append(f"F'({point:g}) must vanish")
    if not potential.d2(0.0) < 0.0:
        problems.append("F''(0) must be negative")
    if not (potential.d2(1.0) > 0.0 and potential.d2(-1.0) > 0.0):
        problems.append("F''(+-1) must be positive")
    for root in potential._derivatives[0].roots():
        if abs(root.imag) < 1e-9 and min(abs(root.real), abs(abs(root.real) - 1.0)) > 1e-6:
            problems.append(f"F' has an extra critical point at {root.real:.6g}")
    return problems


def make_quartic_potential() -> PotentialSpec:
    return PotentialSpec("quartic", POTENTIAL_CONFIG["quartic"]["coefficients"])


def make_polynomial_potential(coefficients, validate: bool = True) -> PotentialSpec:
    """Custom polynomial potential; validate=False admits non-bistable test doubles such as F = 0."""
    potential = PotentialSpec("custom", tuple(coefficients))
    if validate:
        problems = check_admissible(potential)
        if problems:
            raise InadmissiblePotential("inadmissible potential: " + "; ".join(problems))
    return potential


def load_potential(name_or_path: str) -> PotentialSpec:
    """Registry name (quartic, sextic) or a JSON file holding {"coefficients": [...]}."""
    name = detect_potential(name_or_path)
    if name == "quartic":
        return make_quartic_potential()
    if name:
        return make_polynomial_potential(POTENTIAL_CONFIG[name]["coefficients"])
    path = Path(name_or_path)
    if not path.exists():
        raise InvalidParameters(f"unknown potential {name_or_path!r}")
    data = json.loads(path.read_text())
    return make_polynomial_potential(data["coefficients"])


@dataclass(frozen=True, eq=False)
class ProfileSpec:
    value: Callable
    derivative: Callable
    second_derivative: Callable
    c1: float
    c2: float
    surface_tension: float
    analytic_surface_tension: float | None = None
    potential: PotentialSpec | None = None


def _shape_like(x, out: np.ndarray):
    return float(out.reshape(-1)[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


def _quartic_profile(potential: PotentialSpec) -> ProfileSpec:
    root2 = math.sqrt(2.0)

    def value(x):
        return np.tanh(np.asarray(x, dtype=float) / root2)

    def derivative(x):
        m = value(x)
        return (1.0 - m * m) / root2

    def second_derivative(x):
        m = value(x)
        return -m * (1.0 - m * m)

    return ProfileSpec(
        value=value,
        derivative=derivative,
        second_derivative=second_derivative,
        c1=2.0,
        c2=root2,
        surface_tension=surface_tension(potential),
        analytic_surface_tension=analytic_surface_tension(potential),
        potential=potential,
    )


def _integrated_profile(potential: PotentialSpec) -> ProfileSpec:
    threshold = 1.0 - TAIL_SWITCH

    def rhs(_x, m):
        return [math.sqrt(max(2.0 * float(potential.eval(m[0])), 0.0))]

    def reached(_x, m):
        return m[0] - threshold

    reached.terminal = True
    reached.direction = 1

    solution = solve_ivp(rhs, (0.0, ODE_XMAX), [0.0], method="RK45", rtol=ODE_RTOL, atol=1e-13,
                         dense_output=True, events=reached)
    if solution.status != 1 or not solution.t_events[0].size:
        raise InadmissiblePotential(f"profile ODE did not reach |m| > {threshold} within |x| <= {ODE_XMAX:g}")
    x_star = float(solution.t_events[0][0])
    m_star = float(solution.y_events[0][0][0])
    rate = math.sqrt(float(potential.d2(1.0)))
    logger.debug("profile tail switch at x*=%.6f (rate %.6f)", x_star, rate)

    def value(x):
        flat = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        s = np.abs(flat)
        core = solution.sol(np.minimum(s, x_star))[0]
        tail = 1.0 - (1.0 - m_star) * np.exp(-rate * (s - x_star))
        return _shape_like(x, np.sign(flat) * np.where(s <= x_star, core, tail))

    def derivative(x):
        m = np.asarray(value(x))
        return np.sqrt(np.maximum(2.0 * potential.eval(m), 0.0))

    def second_derivative(x):
        return potential.d1(np.asarray(value(x)))

    c2 = math.sqrt(min(float(potential.d2(1.0)), float(potential.d2(-1.0)))) * (1.0 - TAIL_SAFETY)
    s = np.linspace(0.0, 40.0, 4001)
    growth = np.exp(c2 * s)
    m = value(s)
    ratios = np.concatenate([
        (1.0 - m) * growth,
        derivative(s) * growth / c2,
        np.abs(second_derivative(s)) * growth / c2**2,
    ])
    c1 = TAIL_C1_INFLATION * float(np.max(ratios))

    return ProfileSpec(
        value=value,
        derivative=derivative,
        second_derivative=second_derivative,
        c1=c1,
        c2=c2,
        surface_tension=surface_tension(potential),
        analytic_surface_tension=analytic_surface_tension(potential),
        potential=potential,
    )


@lru_cache(maxsize=32)
def solve_profile(potential: PotentialSpec) -> ProfileSpec:
    if potential.kind == "quartic":
        return _quartic_profile(potential)
    return _integrated_profile(potential)


@lru_cache(maxsize=32)
def surface_tension(potential: PotentialSpec) -> float:
    """C* = int_{-1}^{1} sqrt(2F(u)) du, with u = 1 - t^2 to remove the endpoint square roots."""

    def integrand(t: float) -> float:
        return math.sqrt(max(2.0 * float(potential.eval(1.0 - t * t)), 0.0)) * 2.0 * t

    value, _ = quad(integrand, 0.0, 1.0, epsabs=SURFACE_TENSION_TOL, epsrel=SURFACE_TENSION_TOL, limit=200)
    return 2.0 * value


def analytic_surface_tension(potential: PotentialSpec) -> float | None:
    if potential.kind == "quartic":
        return 2.0 * math.sqrt(2.0) / 3.0
    return None


def profile_norm_sq(profile: ProfileSpec) -> float:
    """int_R m'(x)^2 dx."""
    half, _ = quad(lambda x: float(profile.derivative(x)) ** 2, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2.0 * half


def tail_bound_certificate(profile: ProfileSpec, s_values=None) -> bool:
    """True when (c1, c2) bound 1 -+ m(+-s), m'(+-s) and m''(+-s) on the sampled s."""
    s = np.concatenate([[0.0], np.geomspace(1e-3, 40.0, 200)]) if s_values is None else np.asarray(s_values)
    c1, c2 = profile.c1, profile.c2
    envelope = c1 * np.exp(-c2 * s) * (1.0 + 1e-12)
    for sign in (1.0, -1.0):
        m = profile.value(sign * s)
        if np.any(np.abs(1.0 - sign * m) > envelope):
            return False
        if np.any(np.abs(profile.derivative(sign * s)) > c2 * envelope):
            return False
        if np.any(np.abs(profile.second_derivative(sign * s)) > c2**2 * envelope):
            return False
    return True


def smoothstep(t):
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """Profile equal to m on [-R, R], +-1 beyond R + 1, blended by a quintic smoothstep."""

    profile: ProfileSpec
    radius: float

    def value(self, s):
        s = np.asarray(s, dtype=float)
        m = self.profile.value(s)
        target = np.where(s >= 0.0, 1.0, -1.0)
        return m + (target - m) * smoothstep(np.abs(s) - self.radius)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        m = self.profile.value(s)
        target = np.where(s >= 0.0, 1.0, -1.0)
        t = np.abs(s) - self.radius
        return self.profile.derivative(s) * (1.0 - smoothstep(t)) + (target - m) * smoothstep_derivative(t) * np.sign(s)

    def derivative_bound(self) -> float:
        c1, c2 = self.profile.c1, self.profile.c2
        return 2.0 * c1 * c2 * math.exp(-c2 * self.radius)

    def check(self) -> None:
        s = self.radius + np.linspace(0.0, 1.0, 401)
        for sign in (1.0, -1.0):
            blended = self.value(sign * s)
            slope = np.abs(self.derivative(sign * s))
            if np.max(slope) > self.derivative_bound() * (1.0 + 1e-9):
                raise BoundViolation(
                    f"cutoff derivative {np.max(slope):.3e} exceeds {self.derivative_bound():.3e}"
                )
            if np.any(sign * (blended - self.profile.value(sign * s)) < -1e-15):
                raise BoundViolation("cutoff profile crosses the transition profile")


def cutoff_radius(eps: float, lambda1: float, scale: float = 1.0) -> float:
    """R = scale * eps^-lambda1."""
    if scale <= 0.0:
        raise InvalidParameters(f"cutoff scale must be positive, got {scale}")
    return scale * eps ** (-lambda1)


def cutoff_window(eps: float, lambda1: float, grid: GridSpec, scale: float = 1.0) -> tuple[float, float]:
    radius = cutoff_radius(eps, lambda1, scale)
    return -grid.L + radius + 1.0, grid.L - radius - 1.0


def cutoff_profile(
    xi: float,
    eps: float,
    lambda1: float,
    grid: GridSpec,
    profile: ProfileSpec | None = None,
    alpha: float | None = None,
    lam: float | None = None,
    scale: float = 1.0,
) -> Field:
    """Nodal samples of the cutoff profile centred at xi, ramp boundary."""
    if eps <= 0.0:
        raise InvalidParameters(f"eps must be positive, got {eps}")
    if lambda1 <= 0.0:
        raise InvalidExponents(f"0 < lambda1 violated: lambda1 = {lambda1}")
    if alpha is not None and lam is not None and not lambda1 < min(2.0 * alpha, lam):
        raise InvalidExponents(
            f"lambda1 < min(2*alpha, lambda) violated: {lambda1} >= min({2.0 * alpha}, {lam})"
        )
    lo, hi = cutoff_window(eps, lambda1, grid, scale)
    if not lo <= xi <= hi:
        raise PreconditionViolation(f"xi = {xi} outside the cutoff window [{lo:.6g}, {hi:.6g}]")
    profile = profile or solve_profile(make_quartic_potential())
    blend = CutoffProfile(profile, cutoff_radius(eps, lambda1, scale))
    blend.check()
    return nodal_field(grid, lambda z: blend.value(z[:, 0] - xi), "ramp")


def profile_field(profile: ProfileSpec, xi: float, grid: GridSpec) -> Field:
    """Nodal samples of m(x - xi), ramp boundary."""
    return nodal_field(grid, lambda z: profile.value(z[:, 0] - xi), "ramp")
