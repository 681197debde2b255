"""Gaussian reference measures: exact banded-Cholesky sampling, partition constants, concentration checks."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, solve_banded

from ..config import IDENTITY_RTOL, MC_SLACK_SE, SAMPLE_CHUNK, WORKERS
from ..errors import FactorizationFailure, IdentityViolation, InvalidParameters
from .mesh import Field, GridSpec, assemble, mass_eigen_floor, smallest_generalized_eigenvalue

logger = logging.getLogger(__name__)

GAUSSIAN_KINDS = ("nu1", "nu2", "rho", "custom")


def _banded_cholesky(precision: sp.spmatrix) -> tuple[np.ndarray, int]:
    upper = sp.triu(precision).tocoo()
    size = precision.shape[0]
    bandwidth = int(np.max(upper.col - upper.row)) if upper.nnz else 0
    ab = np.zeros((bandwidth + 1, size))
    np.add.at(ab, (bandwidth + upper.row - upper.col, upper.col), upper.data)
    try:
        return cholesky_banded(ab, lower=False), bandwidth
    except LinAlgError as exc:
        raise FactorizationFailure(f"precision is not positive definite: {exc}") from exc


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Gaussian with density proportional to exp(-1/2 (h - mean)' P (h - mean) + offset) on coefficients."""

    kind: str
    grid: GridSpec
    precision: sp.csr_matrix
    mean: Field
    banded_factor: np.ndarray
    bandwidth: int
    offset: float = 0.0
    eps: float | None = None
    kappa: float | None = None

    @property
    def N(self) -> int:
        return self.grid.N

    @cached_property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.banded_factor[self.bandwidth])))

    @property
    def log_norm(self) -> float:
        return 0.5 * self.N * math.log(2.0 * math.pi) - 0.5 * self.logdet + self.offset

    @cached_property
    def factor(self) -> sp.csr_matrix:
        """Upper-triangular U with U'U = precision."""
        offsets = np.arange(self.bandwidth + 1)
        return sp.dia_matrix((self.banded_factor[::-1], offsets), shape=(self.N, self.N)).tocsr()

    def color(self, z: np.ndarray) -> np.ndarray:
        """U^{-1} z: maps standard normals to N(0, precision^{-1})."""
        return solve_banded((0, self.bandwidth), self.banded_factor, z)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.banded_factor, False), rhs)

    def quadratic_form(self, coeffs: np.ndarray) -> np.ndarray:
        """(h - mean)' P (h - mean) for one vector or rows of a matrix."""
        centered = np.atleast_2d(coeffs) - self.mean.coeffs
        values = np.einsum("ij,ij->i", centered, (self.precision @ centered.T).T)
        return values if np.ndim(coeffs) > 1 else float(values[0])

    def log_pdf(self, coeffs: np.ndarray):
        return -0.5 * self.quadratic_form(coeffs) - 0.5 * self.N * math.log(2.0 * math.pi) + 0.5 * self.logdet


def gaussian_from_precision(
    grid: GridSpec,
    precision: sp.spmatrix,
    mean: Field | None = None,
    kind: str = "custom",
    offset: float = 0.0,
    eps: float | None = None,
    kappa: float | None = None,
) -> GaussianSpec:
    precision = sp.csr_matrix(precision)
    banded, bandwidth = _banded_cholesky(precision)
    mean = mean if mean is not None else Field(grid, np.zeros(grid.N), "zero")
    return GaussianSpec(kind, grid, precision, mean, banded, bandwidth, offset, eps, kappa)


@lru_cache(maxsize=32)
def nu1_spec(grid: GridSpec, eps: float) -> GaussianSpec:
    fem = assemble(grid)
    return gaussian_from_precision(grid, fem.stiffness / eps, fem.ramp_field, "nu1", -1.0 / (eps * grid.L), eps=eps)


@lru_cache(maxsize=32)
def nu2_spec(grid: GridSpec) -> GaussianSpec:
    fem = assemble(grid)
    return gaussian_from_precision(grid, fem.stiffness, fem.ramp_field, "nu2", -1.0 / grid.L, eps=1.0)


@lru_cache(maxsize=32)
def rho_spec(grid: GridSpec, eps: float, kappa: float) -> GaussianSpec:
    fem = assemble(grid)
    return gaussian_from_precision(grid, fem.h1 * (kappa / eps), None, "rho", 0.0, eps=eps, kappa=kappa)


def make_gaussian(kind: str, grid: GridSpec, eps: float = 1.0, kappa: float = 1.0) -> GaussianSpec:
    if kind == "nu1":
        return nu1_spec(grid, eps)
    if kind == "nu2":
        return nu2_spec(grid)
    if kind == "rho":
        return rho_spec(grid, eps, kappa)
    raise InvalidParameters(f"measure must be one of nu1, nu2, rho; got {kind!r}")


def exact_sample(spec: GaussianSpec, seed) -> Field:
    z = np.random.default_rng(seed).standard_normal(spec.N)
    return Field(spec.grid, spec.mean.coeffs + spec.color(z), spec.mean.boundary)


def _chunk_sizes(n_samples: int) -> list[int]:
    full, rest = divmod(int(n_samples), SAMPLE_CHUNK)
    return [SAMPLE_CHUNK] * full + ([rest] if rest else [])


def sample_statistic(
    spec: GaussianSpec,
    n_samples: int,
    seed: int,
    statistic: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """statistic applied to (k, N) blocks of exact samples; chunks drawn from spawned streams in parallel."""
    sizes = _chunk_sizes(n_samples)
    if not sizes:
        return np.empty(0)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(index: int) -> np.ndarray:
        rng = np.random.default_rng(seeds[index])
        z = rng.standard_normal((spec.N, sizes[index]))
        block = spec.color(z).T + spec.mean.coeffs
        return np.asarray(statistic(block))

    with ThreadPoolExecutor(max_workers=max(1, min(WORKERS, len(sizes)))) as executor:
        parts = list(executor.map(run, range(len(sizes))))
    return np.concatenate(parts)


def sample_batch(spec: GaussianSpec, n_samples: int, seed: int = 0) -> np.ndarray:
    """(n_samples, N) exact draws."""
    return sample_statistic(spec, n_samples, seed, lambda block: block).reshape(-1, spec.N)


def log_partition_ratio_21(grid: GridSpec, eps: float) -> float:
    value = nu2_spec(grid).log_norm - nu1_spec(grid, eps).log_norm
    closed = -0.5 * grid.N * math.log(eps) + (1.0 / grid.L) * (1.0 / eps - 1.0)
    if abs(value - closed) > IDENTITY_RTOL * max(1.0, abs(closed)):
        raise IdentityViolation(f"log(Z2/Z1) = {value!r} differs from closed form {closed!r}")
    return value


class Ratio31(NamedTuple):
    value: float
    lower: float
    upper: float
    passed: bool
    poincare_constant: float


def log_partition_ratio_31(grid: GridSpec, eps: float, kappa: float) -> Ratio31:
    value = rho_spec(grid, eps, kappa).log_norm - nu1_spec(grid, eps).log_norm
    upper = 1.0 / (eps * grid.L) - 0.5 * grid.N * math.log(kappa)
    fem = assemble(grid)
    largest = (1.0 / smallest_generalized_eigenvalue(fem.stiffness, fem.mass)) * (1.0 + 1e-9)
    poincare = largest / grid.L**2
    lower = upper - 0.5 * grid.N * math.log1p(largest)
    tol = 1e-10 * max(1.0, abs(value))
    return Ratio31(value, lower, upper, lower - tol <= value <= upper + tol, poincare)


class ConcentrationCheck(NamedTuple):
    freq: float
    bound: float
    passed: bool
    stderr: float
    informative: bool
    threshold: float


def _verdict(hits: int, n_samples: int, bound: float, threshold: float, label: str) -> ConcentrationCheck:
    freq = hits / n_samples if n_samples else 0.0
    stderr = math.sqrt(freq * (1.0 - freq) / n_samples) if n_samples else 0.0
    informative = bound < 1.0
    if not informative:
        logger.info("%s bound %.3g >= 1 is vacuous", label, bound)
    passed = freq <= bound + MC_SLACK_SE * stderr
    if not passed:
        logger.warning("%s check failed: freq=%.4g bound=%.4g threshold=%.4g", label, freq, bound, threshold)
    return ConcentrationCheck(freq, bound, passed, stderr, informative, threshold)


def concentration_sup_check(
    grid: GridSpec, eps: float, kappa: float, delta: float, n_samples: int, seed: int = 0
) -> ConcentrationCheck:
    """rho(||h||_inf >= delta) <= N exp(-delta^2 / (2 sigma^2)), sigma^2 = eps / (kappa lambda_min(I))."""
    sigma_sq = eps / (kappa * mass_eigen_floor(grid))
    bound = grid.N * math.exp(-(delta**2) / (2.0 * sigma_sq))
    peaks = sample_statistic(rho_spec(grid, eps, kappa), n_samples, seed, lambda x: np.max(np.abs(x), axis=1))
    return _verdict(int(np.sum(peaks >= delta)), n_samples, bound, delta, "sup")


def concentration_h1_check(
    grid: GridSpec, eps: float, kappa: float, r: float, n_samples: int, seed: int = 0
) -> ConcentrationCheck:
    """rho(||h||_{H1} >= sqrt(eps N / kappa) + r) <= exp(-kappa r^2 / (2 eps))."""
    h1 = assemble(grid).h1
    threshold = math.sqrt(eps * grid.N / kappa) + r
    bound = math.exp(-kappa * r * r / (2.0 * eps))

    def norms(block: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", block, (h1 @ block.T).T))

    values = sample_statistic(rho_spec(grid, eps, kappa), n_samples, seed, norms)
    return _verdict(int(np.sum(values >= threshold)), n_samples, bound, threshold, "h1")


def hilbert_concentration_check(sigma_diag, r: float, n_samples: int, seed: int = 0) -> ConcentrationCheck:
    """Diagonal Gaussian: P(||x|| >= sqrt(Tr Sigma) + r) <= exp(-r^2 / (2 sigma^2)), sigma^2 the largest variance."""
    variances = np.asarray(sigma_diag, dtype=float)
    if variances.ndim != 1 or np.any(variances <= 0.0):
        raise InvalidParameters("sigma_diag must be a vector of positive variances")
    threshold = math.sqrt(float(variances.sum())) + r
    bound = math.exp(-r * r / (2.0 * float(variances.max())))
    sizes = _chunk_sizes(n_samples)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    hits = 0
    for size, child in zip(sizes, seeds):
        x = np.random.default_rng(child).standard_normal((size, variances.size)) * np.sqrt(variances)
        hits += int(np.sum(np.linalg.norm(x, axis=1) >= threshold))
    return _verdict(hits, n_samples, bound, threshold, "hilbert")
