"""MCMC for the discrete Gibbs measure: MALA, preconditioned Langevin, ULA, tail and log Z estimators."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from ..config import (
    ACCEPT_COLLAPSE,
    ACCEPT_HIGH,
    ACCEPT_LOW,
    ADAPT_WINDOW,
    BLOWUP_THRESHOLD,
    BURN_IN_IAT_FACTOR,
    IAT_WINDOW,
    IS_RADIUS_FACTOR,
    MIN_ESS,
    RHAT_MAX,
    TAIL_BATCHES,
    TI_MIN_RUNGS,
    TI_SLACK,
    WORKERS,
)
from ..errors import (
    BoundViolation,
    ChainDivergence,
    DegenerateWeights,
    InvalidParameters,
    NonEquilibration,
    PreconditionViolation,
)
from .energy import quadrature_order, raw_energy_and_gradient, raw_energy_parts
from .gaussian import GaussianSpec, gaussian_from_precision, nu1_spec, nu2_spec, rho_spec, sample_statistic
from .mesh import Field, GridSpec, assemble, h1_solver, simplex_quadrature
from .scalar_theory import (
    PotentialSpec,
    ProfileSpec,
    check_admissible,
    cutoff_profile,
    cutoff_window,
    profile_field,
    solve_profile,
    surface_tension,
)
from .tubular import dist_to_manifold

logger = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "stiffness_shifted")
TAIL_METHODS = ("direct", "importance")
CN_STEP_CAP = 4.0
RUNG_STEP = 2.0
IS_CENTERS = 5
HUTCHINSON_PROBES = 32


@dataclass(frozen=True)
class ChainConfig:
    eps: float
    step: float
    precondition: str = "none"
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    n_samples: int = 1000

    def __post_init__(self):
        if self.eps < 0.0:
            raise InvalidParameters(f"eps must be nonnegative, got {self.eps}")
        if self.step <= 0.0:
            raise InvalidParameters(f"step must be positive, got {self.step}")
        if self.burn_in < 0 or self.thin < 0 or self.n_samples < 0:
            raise InvalidParameters("burn_in, thin and n_samples must be nonnegative")
        if self.precondition not in PRECONDITIONERS:
            raise InvalidParameters(f"precondition must be one of {PRECONDITIONERS}, got {self.precondition!r}")

    @property
    def stride(self) -> int:
        return max(1, self.thin)


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    eps_log_p: float
    method: str
    upper_bound_only: bool = False
    n_effective: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class LangevinChain:
    """Metropolis-adjusted Langevin chain targeting exp(-E(h)/eps) dh on interior coefficients.

    precondition="none" is MALA with the identity metric. "stiffness_shifted" is the
    Crank-Nicolson Langevin proposal built on the Gaussian with precision (Lambda + c I)/eps,
    c = max(F''(1), 0), and mean the ramp; it leaves that Gaussian invariant, so the
    acceptance only sees the non-Gaussian remainder of the energy.
    """

    def __init__(self, config: ChainConfig, grid: GridSpec, potential: PotentialSpec, init: Field | None = None):
        if config.eps <= 0.0:
            raise InvalidParameters("MALA needs eps > 0")
        self.config = config
        self.grid = grid
        self.potential = potential
        self.eps = config.eps
        self.step_size = config.step
        self.rng = np.random.default_rng(config.seed)
        fem = assemble(grid)
        start = init if init is not None else fem.ramp_field
        if start.grid != grid or start.boundary != "ramp":
            raise PreconditionViolation("initial state must be a ramp-boundary field on the chain's grid")
        self.reference: GaussianSpec | None = None
        if config.precondition == "stiffness_shifted":
            shift = max(float(potential.d2(1.0)), 0.0)
            precision = (fem.stiffness + shift * fem.mass) / self.eps
            self.reference = gaussian_from_precision(grid, precision, fem.ramp_field, "custom")
        self.coeffs = start.coeffs.copy()
        self.energy, self.gradient = self._evaluate(self.coeffs)
        self._pending: tuple[float, np.ndarray] | None = None
        self.iteration = 0
        self.accepted = 0
        self.proposed = 0
        self.last_accept = True

    def _evaluate(self, coeffs: np.ndarray) -> tuple[float, np.ndarray]:
        energy, gradient = raw_energy_and_gradient(Field(self.grid, coeffs), self.potential)
        if not np.all(np.isfinite(gradient)):
            raise ChainDivergence(f"non-finite energy gradient at iteration {self.iteration}")
        return energy, gradient

    def _mala_move(self) -> tuple[np.ndarray, float]:
        tau = self.step_size
        drift = self.gradient / self.eps
        proposal = self.coeffs - tau * drift + math.sqrt(2.0 * tau) * self.rng.standard_normal(self.grid.N)
        energy, gradient = self._evaluate(proposal)
        forward = proposal - self.coeffs + tau * drift
        backward = self.coeffs - proposal + tau * gradient / self.eps
        log_ratio = (self.energy - energy) / self.eps - (backward @ backward - forward @ forward) / (4.0 * tau)
        self._pending = (energy, gradient)
        return proposal, log_ratio

    def _cn_move(self) -> tuple[np.ndarray, float]:
        ref = self.reference
        tau = self.step_size
        contraction = (2.0 - tau) / (2.0 + tau)
        push = 2.0 * tau / (2.0 + tau)
        scale = math.sqrt(8.0 * tau) / (2.0 + tau)
        inv_cov = (2.0 + tau) ** 2 / (8.0 * tau)
        mean = ref.mean.coeffs

        def remainder_gradient(coeffs, gradient):
            return gradient / self.eps - ref.precision @ (coeffs - mean)

        def proposal_mean(coeffs, gradient):
            return contraction * (coeffs - mean) - push * ref.solve(remainder_gradient(coeffs, gradient))

        u = self.coeffs - mean
        u_new = proposal_mean(self.coeffs, self.gradient) + scale * ref.color(self.rng.standard_normal(self.grid.N))
        proposal = mean + u_new
        energy, gradient = self._evaluate(proposal)
        forward = u_new - proposal_mean(self.coeffs, self.gradient)
        backward = u - proposal_mean(proposal, gradient)
        log_q = -0.5 * inv_cov * (
            float(backward @ (ref.precision @ backward)) - float(forward @ (ref.precision @ forward))
        )
        log_ratio = (self.energy - energy) / self.eps + log_q
        self._pending = (energy, gradient)
        return proposal, log_ratio

    def advance(self) -> bool:
        proposal, log_ratio = self._cn_move() if self.reference is not None else self._mala_move()
        self.iteration += 1
        self.proposed += 1
        accept = bool(np.isfinite(log_ratio)) and math.log(self.rng.uniform()) < log_ratio
        if accept:
            self.coeffs = proposal
            self.energy, self.gradient = self._pending
            self.accepted += 1
        self.last_accept = accept
        return accept

    def _adapt(self, rate: float) -> None:
        if rate < ACCEPT_COLLAPSE:
            self.step_size *= 0.5
        elif rate < ACCEPT_LOW:
            self.step_size *= 0.8
        elif rate > ACCEPT_HIGH:
            self.step_size *= 1.25
        if self.reference is not None:
            self.step_size = min(self.step_size, CN_STEP_CAP)

    def burn(self, n_steps: int | None = None) -> None:
        n_steps = self.config.burn_in if n_steps is None else n_steps
        window = 0
        for i in range(n_steps):
            window += self.advance()
            if (i + 1) % ADAPT_WINDOW == 0:
                self._adapt(window / ADAPT_WINDOW)
                window = 0
        logger.debug("burn-in done: %d steps, step size %.4g", n_steps, self.step_size)
        self.accepted = self.proposed = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    @property
    def at_step_cap(self) -> bool:
        """True once a Crank-Nicolson chain has adapted its step up to CN_STEP_CAP."""
        return self.reference is not None and self.step_size >= CN_STEP_CAP

    @property
    def state(self) -> Field:
        return Field(self.grid, self.coeffs)

    def samples(self, n_samples: int | None = None, burn: bool = True) -> Iterator[Field]:
        if burn:
            self.burn()
        n_samples = self.config.n_samples if n_samples is None else n_samples
        for _ in range(n_samples):
            for _ in range(self.config.stride):
                self.advance()
            yield self.state
        rate = self.acceptance_rate
        if not n_samples or ACCEPT_LOW <= rate <= ACCEPT_HIGH:
            return
        if rate > ACCEPT_HIGH and self.at_step_cap:
            logger.debug("acceptance rate %.3f at the Crank-Nicolson step cap %.1f", rate, CN_STEP_CAP)
        else:
            logger.warning("acceptance rate %.3f outside [%.1f, %.1f]", rate, ACCEPT_LOW, ACCEPT_HIGH)


def mala_chain(
    config: ChainConfig, grid: GridSpec, potential: PotentialSpec, init: Field | None = None
) -> Iterator[Field]:
    return LangevinChain(config, grid, potential, init).samples()


def coarsen_noise(noise: np.ndarray) -> np.ndarray:
    """Pairwise-merged increments: the same Brownian path seen with twice the step."""
    noise = np.asarray(noise)
    usable = noise.shape[0] - noise.shape[0] % 2
    return (noise[0:usable:2] + noise[1:usable:2]) / math.sqrt(2.0)


def unadjusted_langevin(
    config: ChainConfig,
    grid: GridSpec,
    potential: PotentialSpec,
    init: Field | None = None,
    noise: np.ndarray | None = None,
) -> Iterator[Field]:
    """Euler-Maruyama in the lumped-mass metric. Biased: no accept step."""
    fem = assemble(grid)
    lumped = fem.lumped_mass
    tau = config.step
    scale = math.sqrt(2.0 * config.eps * tau) / np.sqrt(lumped)
    rng = np.random.default_rng(config.seed)
    field = init if init is not None else fem.ramp_field
    coeffs = field.coeffs.copy()
    total = config.burn_in + config.n_samples * config.stride
    if noise is not None and noise.shape[0] < total:
        raise InvalidParameters(f"noise path has {noise.shape[0]} increments, {total} needed")
    for k in range(total):
        _, gradient = raw_energy_and_gradient(Field(grid, coeffs, field.boundary), potential)
        z = noise[k] if noise is not None else rng.standard_normal(grid.N)
        coeffs = coeffs - tau * gradient / lumped + scale * z
        if not np.all(np.isfinite(coeffs)) or np.max(np.abs(coeffs)) > BLOWUP_THRESHOLD:
            raise ChainDivergence(f"ULA blew up at step {k}: ||h||_inf > {BLOWUP_THRESHOLD:g}")
        done = k + 1 - config.burn_in
        if done > 0 and done % config.stride == 0:
            yield Field(grid, coeffs, field.boundary)


def integrated_autocorrelation_time(series, c: float = IAT_WINDOW) -> float:
    """FFT autocorrelation with Sokal's adaptive window; floored at 1."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 2:
        return 1.0
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    if acf[0] <= 0.0:
        return 1.0
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) < c * taus
    m = int(np.argmin(window)) if not np.all(window) else n - 1
    return max(float(taus[m]), 1.0)


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor of m chains of equal length n, shape (m, n)."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if m < 2 or n < 2:
        raise InvalidParameters("R-hat needs at least two chains of two samples")
    within = float(np.mean(np.var(chains, axis=1, ddof=1)))
    between = n * float(np.var(chains.mean(axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    pooled = (n - 1) / n * within + between / n
    return math.sqrt(pooled / within)


def _batch_interval(indicator: np.ndarray) -> tuple[float, float, float]:
    n = indicator.size
    p = float(indicator.mean())
    batches = min(TAIL_BATCHES, n // 2)
    if batches < 2:
        return p, 0.0, 1.0
    means = np.array([chunk.mean() for chunk in np.array_split(indicator, batches)])
    half = stats.t.ppf(0.975, batches - 1) * float(np.std(means, ddof=1)) / math.sqrt(batches)
    return p, max(0.0, p - half), min(1.0, p + half)


def _chain_distances(
    config: ChainConfig, grid: GridSpec, potential: PotentialSpec, profile: ProfileSpec
) -> tuple[np.ndarray, float]:
    """dist(h, M) along an equilibrated chain; burn-in extended to BURN_IN_IAT_FACTOR x IAT."""
    chain = LangevinChain(config, grid, potential)
    dists = np.array([dist_to_manifold(f, profile) for f in chain.samples()])
    tau = integrated_autocorrelation_time(dists)
    extra = min(max(0, math.ceil(BURN_IN_IAT_FACTOR * tau) - config.burn_in // config.stride), dists.size)
    if extra:
        logger.info("extending burn-in by %d samples (IAT %.1f)", extra, tau)
        more = [dist_to_manifold(f, profile) for f in chain.samples(extra, burn=False)]
        dists = np.concatenate([dists[extra:], more])
        tau = integrated_autocorrelation_time(dists)
    logger.info("chain eps=%.3g: %d samples, IAT %.1f, acceptance %.2f", config.eps, dists.size, tau, chain.acceptance_rate)
    return dists, tau


def _direct_estimate(dists: np.ndarray, tau: float, delta: float, eps: float) -> TailEstimate:
    indicator = (dists > delta).astype(float)
    n_eff = dists.size / tau
    if not indicator.any():
        upper = min(1.0, 3.0 / max(n_eff, 1.0))
        return TailEstimate(0.0, 0.0, upper, eps * math.log(upper), "direct", True, n_eff)
    p, lo, hi = _batch_interval(indicator)
    return TailEstimate(p, lo, hi, eps * math.log(p), "direct", False, n_eff)


def _fluctuation_precision_scale(grid: GridSpec, eps: float, radius: float, seed: int) -> float:
    """kappa with E||v||^2_{L2} = radius^2 under N(0, (eps/kappa)(Lambda + I)^{-1}), trace by Hutchinson."""
    fem = assemble(grid)
    solve = h1_solver(grid)
    rng = np.random.default_rng(seed)
    probes = rng.choice((-1.0, 1.0), size=(HUTCHINSON_PROBES, grid.N))
    trace = float(np.mean([z @ (fem.mass @ solve(z)) for z in probes]))
    return eps * trace / radius**2


def _importance_centers(
    grid: GridSpec, profile: ProfileSpec, eps: float, lambda1: float | None
) -> list[np.ndarray]:
    xis = np.linspace(-grid.L / 2.0, grid.L / 2.0, IS_CENTERS)
    centers = []
    for xi in xis:
        if lambda1 is not None:
            lo, hi = cutoff_window(eps, lambda1, grid)
            if lo <= xi <= hi:
                centers.append(cutoff_profile(float(xi), eps, lambda1, grid, profile).coeffs)
                continue
        centers.append(profile_field(profile, float(xi), grid).coeffs)
    return centers


def _importance_estimate(
    config: ChainConfig,
    delta: float,
    grid: GridSpec,
    potential: PotentialSpec,
    profile: ProfileSpec,
    lambda1: float | None,
) -> TailEstimate:
    """mu(dist > delta) = mu(A_ref) * mu(A | A_ref); mu(A_ref) from the chain, the ratio by weighted sampling."""
    eps = config.eps
    dists, tau = _chain_distances(config, grid, potential, profile)
    ref_delta = float(np.median(dists))
    if delta <= ref_delta:
        logger.info("delta %.3g below the reference level %.3g; direct estimate suffices", delta, ref_delta)
        return _direct_estimate(dists, tau, delta, eps)
    p_ref, ref_lo, ref_hi = _batch_interval((dists > ref_delta).astype(float))

    kappa = _fluctuation_precision_scale(grid, eps, IS_RADIUS_FACTOR * delta, config.seed)
    fluct = rho_spec(grid, eps, kappa)
    centers = _importance_centers(grid, profile, eps, lambda1)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    picks = rng.integers(len(centers), size=config.n_samples)
    draws = fluct.color(rng.standard_normal((grid.N, config.n_samples))).T
    samples = np.stack(centers)[picks] + draws

    log_q = logsumexp(np.stack([fluct.log_pdf(samples - c) for c in centers]), axis=0) - math.log(len(centers))
    energies = np.array([sum(raw_energy_parts(Field(grid, coeffs), potential)) for coeffs in samples])
    log_w = -energies / eps - log_q
    dists_q = np.array([dist_to_manifold(Field(grid, coeffs), profile) for coeffs in samples])
    hit_a = dists_q > delta
    hit_ref = dists_q > ref_delta

    if not hit_ref.any():
        raise DegenerateWeights("no proposal sample reached the reference event")
    shift = float(np.max(log_w[hit_ref]))
    w = np.where(hit_ref, np.exp(log_w - shift), 0.0)
    ess = float(w.sum() ** 2 / np.sum(w**2))
    if ess < MIN_ESS:
        raise DegenerateWeights(f"effective sample size {ess:.1f} < {MIN_ESS:g}")
    a = np.where(hit_a, w, 0.0)
    if not hit_a.any():
        upper = min(1.0, ref_hi * 3.0 / ess)
        return TailEstimate(0.0, 0.0, upper, eps * math.log(upper), "importance", True, ess)
    ratio = float(a.sum() / w.sum())
    n = config.n_samples
    se_ratio = float(np.std(a - ratio * w) / (w.mean() * math.sqrt(n)))
    se_ref = max(p_ref - ref_lo, ref_hi - p_ref) / 1.96
    p = p_ref * ratio
    se_log = math.sqrt((se_ratio / ratio) ** 2 + (se_ref / p_ref) ** 2)
    lo, hi = p * math.exp(-1.96 * se_log), min(1.0, p * math.exp(1.96 * se_log))
    logger.info("importance estimate p=%.3e (ratio %.3e, reference %.3f, ESS %.0f)", p, ratio, p_ref, ess)
    return TailEstimate(p, lo, hi, eps * math.log(p), "importance", False, ess)


def estimate_tail(
    config: ChainConfig,
    delta: float,
    grid: GridSpec,
    potential: PotentialSpec,
    method: str = "direct",
    profile: ProfileSpec | None = None,
    lambda1: float | None = None,
) -> TailEstimate:
    """mu(dist(h, M) > delta) with a 95% interval."""
    if method not in TAIL_METHODS:
        raise InvalidParameters(f"method must be one of {TAIL_METHODS}, got {method!r}")
    if delta <= 0.0:
        return TailEstimate(1.0, 1.0, 1.0, 0.0, method, False, float(config.n_samples))
    profile = profile or solve_profile(potential)
    if method == "importance":
        return _importance_estimate(config, delta, grid, potential, profile, lambda1)
    dists, tau = _chain_distances(config, grid, potential, profile)
    return _direct_estimate(dists, tau, delta, config.eps)


def _potential_integrals(block: np.ndarray, grid: GridSpec, potential: PotentialSpec, boundary: str) -> np.ndarray:
    """int F(h) for every row of a (k, N) block of coefficient vectors."""
    rule = simplex_quadrature(grid, quadrature_order(potential))
    ends = (-1.0, 1.0) if boundary == "ramp" else (0.0, 0.0)
    ext = np.hstack([block, np.tile(ends, (block.shape[0], 1))])
    values = rule.interp @ ext.T
    return rule.weights @ potential.eval(values)


class LogZEstimate(NamedTuple):
    """eps log Z^eps with its Monte Carlo standard error and the per-rung means."""

    value: float
    stderr: float
    betas: tuple[float, ...]
    means: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "betas": list(self.betas), "means": list(self.means)}


def _rung_mean(
    beta: float,
    grid: GridSpec,
    potential: PotentialSpec,
    eps: float,
    samples: int,
    seed: np.random.SeedSequence,
    step: float,
    burn_in: int,
) -> tuple[float, float]:
    """(mean, standard error) of (1/eps) int F under the beta-tilted measure."""
    if beta == 0.0:
        values = sample_statistic(
            nu1_spec(grid, eps), samples, int(seed.generate_state(1)[0]),
            lambda block: _potential_integrals(block, grid, potential, "ramp") / eps,
        )
        return float(values.mean()), float(values.std(ddof=1)) / math.sqrt(values.size)
    tilted = potential.scaled(beta)
    starts = (assemble(grid).ramp_field, Field(grid, np.zeros(grid.N)))
    traces = []
    for start, child in zip(starts, seed.spawn(2)):
        config = ChainConfig(
            eps=eps,
            step=step,
            precondition="stiffness_shifted",
            burn_in=burn_in,
            seed=int(child.generate_state(1)[0]),
            n_samples=max(2, samples // 2),
        )
        chain = LangevinChain(config, grid, tilted, start)
        traces.append([raw_energy_parts(f, potential)[1] / eps for f in chain.samples()])
    traces = np.asarray(traces)
    rhat = gelman_rubin(traces)
    if rhat > RHAT_MAX:
        raise NonEquilibration(f"rung beta={beta:.4g} not equilibrated: R-hat {rhat:.3f} > {RHAT_MAX}")
    tau = float(np.mean([integrated_autocorrelation_time(t) for t in traces]))
    return float(traces.mean()), float(traces.std(ddof=1)) * math.sqrt(tau / traces.size)


def trapezoid_weights(betas) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    widths = np.diff(betas)
    weights = np.zeros(betas.size)
    weights[:-1] += widths / 2.0
    weights[1:] += widths / 2.0
    return weights


def thermodynamic_integration(betas, means) -> float:
    """log Z = -int_0^1 E_beta[(1/eps) int F] d beta by the trapezoid rule."""
    return -float(trapezoid(np.asarray(means, dtype=float), np.asarray(betas, dtype=float)))


def log_partition_estimate(
    grid: GridSpec,
    potential: PotentialSpec,
    eps: float,
    n_rungs: int,
    samples_per_rung: int,
    seed: int = 0,
    step: float = RUNG_STEP,
    burn_in: int | None = None,
) -> LogZEstimate:
    """Thermodynamic integration over cubic rungs beta_k = (k / (n_rungs - 1))^3.

    Rung 0 is sampled exactly from nu1; the others by two Crank-Nicolson chains each,
    started from the ramp and from zero, with adaptive steps during burn-in.
    """
    if n_rungs < TI_MIN_RUNGS:
        raise InvalidParameters(f"need at least {TI_MIN_RUNGS} rungs, got {n_rungs}")
    if eps <= 0.0:
        raise InvalidParameters(f"eps must be positive, got {eps}")
    betas = (np.arange(n_rungs) / (n_rungs - 1)) ** 3
    if potential.is_zero:
        return LogZEstimate(0.0, 0.0, tuple(betas), (0.0,) * n_rungs)
    burn_in = max(200, samples_per_rung // 2) if burn_in is None else burn_in
    seeds = np.random.SeedSequence(seed).spawn(n_rungs)
    results: dict[int, tuple[float, float]] = {}
    with ThreadPoolExecutor(max_workers=max(1, min(WORKERS, n_rungs))) as executor:
        future_map = {
            executor.submit(
                _rung_mean, float(beta), grid, potential, eps, samples_per_rung, seeds[k], step, burn_in
            ): k
            for k, beta in enumerate(betas)
        }
        for future in as_completed(future_map):
            results[future_map[future]] = future.result()
    means = np.array([results[k][0] for k in range(n_rungs)])
    errors = np.array([results[k][1] for k in range(n_rungs)])
    value = eps * thermodynamic_integration(betas, means)
    stderr = eps * math.sqrt(float(np.sum((trapezoid_weights(betas) * errors) ** 2)))
    logger.info("eps=%.3g: eps log Z = %.5f +- %.5f over %d rungs", eps, value, stderr, n_rungs)
    return LogZEstimate(value, stderr, tuple(float(b) for b in betas), tuple(float(m) for m in means))


def partition_floor(potential: PotentialSpec) -> float:
    return -surface_tension(potential) - TI_SLACK


def estimate_log_Z(
    grid: GridSpec,
    potential: PotentialSpec,
    eps: float,
    n_rungs: int,
    samples_per_rung: int,
    seed: int = 0,
    step: float = RUNG_STEP,
    burn_in: int | None = None,
    check_floor: bool = True,
) -> float:
    """eps log Z^eps, Z^eps = int exp(-(1/eps) int F(h)) nu1(dh)."""
    value = log_partition_estimate(grid, potential, eps, n_rungs, samples_per_rung, seed, step, burn_in).value
    if check_floor and not potential.is_zero and not check_admissible(potential):
        floor = partition_floor(potential)
        if value < floor:
            raise BoundViolation(f"eps log Z = {value:.5f} below -C* - {TI_SLACK} = {floor:.5f}")
    return value


def quadratic_log_z(grid: GridSpec, eps: float) -> float:
    """Exact log Z^eps for F(u) = u^2 / 2."""
    fem = assemble(grid)
    ramp = fem.ramp_field.extended()
    weighted = fem.full_mass @ ramp
    source = weighted[: grid.N]
    q0 = float(ramp @ weighted)
    shifted = rho_spec(grid, 1.0, 1.0)
    logdet_ratio = nu2_spec(grid).logdet - shifted.logdet
    return 0.5 * logdet_ratio - q0 / (2.0 * eps) + float(source @ shifted.solve(source)) / (2.0 * eps)
