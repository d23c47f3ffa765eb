"""Marginalized log-likelihood and the EM iteration for one modulation hypothesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import as_samples
from .constellation import ConstellationSpec
from .errors import ConfigurationError, DegenerateStatisticsError, NumericError
from .moments import (
    NuisanceEstimate,
    eighth_order_phase,
    fuse_noise_estimates,
    kth_power_phase,
    m2m4_amplitude_noise,
    sample_moments,
    wrap_phase,
)

# N0 never drops below this fraction of the mean sample power.
_NOISE_FLOOR = 1e-12
# |Upsilon^H r_l| below this fraction of sqrt(E) ||r_l|| leaves theta undefined.
_DEGENERATE_CORRELATION = 1e-13

GRID_REFINE_MODES = ("estimated", "true", "off")


@dataclass(frozen=True)
class EmOptions:
    """Stopping rule and initialization settings.

    Attributes:
        stop_delta: stop once |dLLF| / max(1, |LLF|) drops below this.
        max_iterations: iteration cap; 0 evaluates the initial point only.
        grid_refine: gate for the coarse phase search. ``"estimated"`` uses
            the initializer's own SNR estimate, ``"true"`` the SNR passed in
            by the caller, ``"off"`` disables the search.
        grid_refine_snr_threshold_db: SNR at or above which the search runs.
        grid_points: phase candidates per sensor in the search.
        restarts: extra EM runs from perturbed starting points.
        noise_fusion: ``"mean"`` or ``"sum"`` of the valid per-sensor N0.
        resolve_cross_ambiguity: score the pi/4 rotation of the eighth-order
            phase estimate by likelihood, for every SNR.
        restart_seed: seed for the restart perturbations.
    """

    stop_delta: float = 1e-4
    max_iterations: int = 500
    grid_refine: str = "estimated"
    grid_refine_snr_threshold_db: float = 10.0
    grid_points: int = 16
    restarts: int = 0
    noise_fusion: str = "mean"
    resolve_cross_ambiguity: bool = True
    restart_seed: int = 0

    def __post_init__(self):
        if not self.stop_delta > 0:
            raise ConfigurationError(f"stop_delta must be positive, got {self.stop_delta}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be a non-negative integer, got {self.max_iterations}")
        if self.grid_refine not in GRID_REFINE_MODES:
            raise ConfigurationError(f"grid_refine must be one of {GRID_REFINE_MODES}")
        if self.grid_points < 1:
            raise ConfigurationError("grid_points must be positive")
        if self.restarts < 0:
            raise ConfigurationError("restarts must be non-negative")
        if self.noise_fusion not in ("mean", "sum"):
            raise ConfigurationError(f"noise_fusion must be 'mean' or 'sum', got {self.noise_fusion!r}")


@dataclass(frozen=True, eq=False)
class PosteriorStats:
    """Symbol posteriors alpha (N x M), their means v (N) and total energy E."""

    alphas: np.ndarray
    symbol_means: np.ndarray
    energy: float


@dataclass(frozen=True, eq=False)
class EmResult:
    estimate: NuisanceEstimate
    final_llf: float
    llf_trace: list
    iterations: int
    converged: bool
    init_used: dict = field(default_factory=dict)


def _log_weights(r: np.ndarray, coefficients: np.ndarray, noise_power: float,
                 spec: ConstellationSpec) -> np.ndarray:
    """-(1/N0) sum_l |r[l, n] - h_l I^m|^2 as an N x M matrix."""
    z = np.conj(coefficients) @ r
    gain_power = float(np.sum(np.abs(coefficients) ** 2))
    sample_power = np.sum(r.real**2 + r.imag**2, axis=0)
    cross = np.real(np.conj(spec.symbols)[np.newaxis, :] * z[:, np.newaxis])
    distance = sample_power[:, np.newaxis] - 2.0 * cross + gain_power * spec.energies[np.newaxis, :]
    return -distance / noise_power


def _posterior(r: np.ndarray, u, spec: ConstellationSpec, want_alphas: bool = True):
    """Shared E-step / likelihood pass.

    Returns:
        ``(alphas or None, llf)``
    """
    noise_power = float(u.noise_power)
    if not noise_power > 0:
        raise NumericError(f"noise power must be positive, got {noise_power}")
    coefficients = np.asarray(u.gains, dtype=float) * np.exp(1j * np.asarray(u.phases, dtype=float))
    if coefficients.size != r.shape[0]:
        raise ConfigurationError(f"{coefficients.size} channel entries for {r.shape[0]} sensors")
    # Non-finite input is reported below with its index.
    with np.errstate(invalid="ignore", over="ignore"):
        exponent = _log_weights(r, coefficients, noise_power, spec)
        peak = exponent.max(axis=1, keepdims=True)
        weights = np.exp(exponent - peak)
        totals = weights.sum(axis=1)
        per_sample = peak[:, 0] + np.log(totals)
    if not np.all(np.isfinite(per_sample)):
        bad = int(np.flatnonzero(~np.isfinite(per_sample))[0])
        raise NumericError(f"log-likelihood is not finite at n={bad}")
    n_sensors, n_samples = r.shape
    llf = (-n_samples * math.log(spec.size) - n_sensors * n_samples * math.log(noise_power)
           + float(np.sum(per_sample)))
    alphas = weights / totals[:, np.newaxis] if want_alphas else None
    return alphas, llf


def log_likelihood(r, u, spec: ConstellationSpec) -> float:
    """Symbol-marginalized log-likelihood of the observations under ``spec``.

    ``u`` is anything with ``gains``, ``phases`` and ``noise_power``
    (a ChannelRealization or a NuisanceEstimate). Constant terms in pi are
    dropped.
    """
    return _posterior(as_samples(r), u, spec, want_alphas=False)[1]


def _stats_from_alphas(alphas: np.ndarray, spec: ConstellationSpec) -> PosteriorStats:
    means = alphas @ spec.symbols
    energy = float(np.sum(alphas @ spec.energies))
    return PosteriorStats(alphas, means, energy)


def e_step(r, u_hat, spec: ConstellationSpec) -> PosteriorStats:
    """Posterior symbol probabilities fused over all sensors."""
    alphas, _ = _posterior(as_samples(r), u_hat, spec)
    return _stats_from_alphas(alphas, spec)


def m_step(r, stats: PosteriorStats) -> NuisanceEstimate:
    """Closed-form maximizer of the expected complete-data log-likelihood.

    Raises:
        DegenerateStatisticsError: if E <= 0 or the soft symbols are
            orthogonal to some sensor's data (phase undefined).
    """
    r = as_samples(r)
    if not stats.energy > 0:
        raise DegenerateStatisticsError(f"posterior symbol energy is {stats.energy}")
    means = stats.symbol_means
    correlation = r @ np.conj(means)
    scale = math.sqrt(stats.energy) * np.linalg.norm(r, axis=1)
    if np.any(np.abs(correlation) <= _DEGENERATE_CORRELATION * scale):
        raise DegenerateStatisticsError("soft symbols are orthogonal to a sensor's data")
    phases = wrap_phase(np.arctan2(correlation.imag, correlation.real))
    gains = np.real(np.exp(-1j * phases) * correlation) / stats.energy
    coefficients = gains * np.exp(1j * phases)
    # sum_n sum_m alpha |I^m|^2 is E, so the expected residual needs no per-symbol pass.
    n_sensors, n_samples = r.shape
    sample_power = float(np.sum(r.real**2 + r.imag**2))
    cross = float(np.real(np.vdot(coefficients, correlation)))
    residual = sample_power - 2.0 * cross + float(np.sum(gains**2)) * stats.energy
    floor = _NOISE_FLOOR * sample_power / (n_sensors * n_samples)
    noise = max(residual / (n_sensors * n_samples), floor)
    return NuisanceEstimate(gains, phases, noise)


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(1.0, abs(old))


def _single_run(r: np.ndarray, spec: ConstellationSpec, init: NuisanceEstimate,
                options: EmOptions) -> EmResult:
    estimate = init
    alphas, llf = _posterior(r, estimate, spec)
    trace = [llf]
    converged = False
    perturbations = 0
    step = math.pi / (4 * spec.symmetry_order)
    for _ in range(options.max_iterations):
        stats = _stats_from_alphas(alphas, spec)
        try:
            updated = m_step(r, stats)
        except DegenerateStatisticsError:
            perturbations += 1
            updated = estimate.with_phases(wrap_phase(estimate.phases + step))
        new_alphas, new_llf = _posterior(r, updated, spec)
        estimate, alphas = updated, new_alphas
        trace.append(new_llf)
        change = _relative_change(new_llf, llf)
        llf = new_llf
        if change < options.stop_delta:
            converged = True
            break
    info = {"perturbations": perturbations}
    return EmResult(estimate, llf, trace, len(trace) - 1, converged, info)


def run_em(r, spec: ConstellationSpec, init: NuisanceEstimate, options: EmOptions | None = None) -> EmResult:
    """Iterate E- and M-steps from ``init`` until the relative LLF change is below delta."""
    options = options or EmOptions()
    r = as_samples(r)
    if init.sensor_count != r.shape[0]:
        raise ConfigurationError(f"initial estimate has {init.sensor_count} sensors, data has {r.shape[0]}")
    if not init.noise_power > 0:
        raise ConfigurationError("initial noise power must be positive")
    best = _single_run(r, spec, init, options)
    best.init_used["start"] = "given"
    if init.validity is not None:
        best.init_used["noise"] = "m2m4" if np.any(init.validity) else "grid"
    if options.restarts:
        rng = np.random.default_rng(options.restart_seed)
        half_sector = math.pi / spec.symmetry_order
        for index in range(options.restarts):
            phases = wrap_phase(init.phases + rng.uniform(-half_sector, half_sector, init.sensor_count))
            gains = init.gains * np.exp(rng.normal(0.0, 0.1, init.sensor_count))
            candidate = _single_run(r, spec, NuisanceEstimate(gains, phases, init.noise_power), options)
            if candidate.final_llf > best.final_llf:
                candidate.init_used["start"] = f"restart {index + 1}"
                best = candidate
    return best


def _is_cross(spec: ConstellationSpec) -> bool:
    return spec.format_id.endswith("qam") and round(math.sqrt(spec.size)) ** 2 != spec.size


def _coordinate_search(r: np.ndarray, spec: ConstellationSpec, estimate: NuisanceEstimate,
                       offsets: np.ndarray) -> NuisanceEstimate:
    """Per-sensor phase search holding the other sensors fixed; offsets must include 0."""
    phases = estimate.phases.copy()
    for sensor in range(phases.size):
        base = phases[sensor]
        scores = []
        for offset in offsets:
            phases[sensor] = base + offset
            scores.append(_posterior(r, estimate.with_phases(phases), spec, want_alphas=False)[1])
        phases[sensor] = wrap_phase(base + offsets[int(np.argmax(scores))])
    return estimate.with_phases(phases)


def initialize(r, spec: ConstellationSpec, options: EmOptions | None = None,
               true_snr_db: Optional[float] = None) -> NuisanceEstimate:
    """Moment-based starting point for EM, with optional coarse phase search.

    Steps: M2M4 gain and noise per sensor; blind phase per sensor (K-th power,
    or eighth-order for cross QAM); noise fusion over the valid sensors, with a
    likelihood-scored N0 grid when none is valid; and, when the SNR gate
    passes, a per-sensor phase grid over +-pi/K (in every 2 pi/K sector when L > 1)
    scored by likelihood. If no sensor gives a positive N0 but the moments are
    signal-dominated, the gate is treated as passed and the N0 grid is re-scored
    after the phase search.
    """
    options = options or EmOptions()
    r = as_samples(r)
    n_sensors = r.shape[0]
    gains = np.empty(n_sensors)
    noise = np.empty(n_sensors)
    valid = np.zeros(n_sensors, dtype=bool)
    phases = np.empty(n_sensors)
    cross = _is_cross(spec)
    for sensor in range(n_sensors):
        gains[sensor], noise[sensor], valid[sensor] = m2m4_amplitude_noise(r[sensor], spec)
        if cross:
            phases[sensor] = eighth_order_phase(r[sensor], spec)
        else:
            phases[sensor] = kth_power_phase(r[sensor], spec)

    def noise_grid() -> float:
        mean_power = float(np.mean([sample_moments(row)[0] for row in r]))
        candidates = np.logspace(math.log10(mean_power / 100.0), math.log10(mean_power), 20)
        scores = [_posterior(r, NuisanceEstimate(gains, phases, n0), spec, want_alphas=False)[1]
                  for n0 in candidates]
        return float(candidates[int(np.argmax(scores))])

    noise_power = fuse_noise_estimates(noise, valid, noise_grid, mode=options.noise_fusion)
    from_grid = not np.any(valid & (noise > 0))
    # A non-negative radicand with N0 <= 0 means the noise sits below moment resolution.
    signal_dominated = from_grid and any(
        2.0 * m2**2 - m4 >= 0.0 for m2, m4 in (sample_moments(row) for row in r))
    estimate = NuisanceEstimate(gains, phases, noise_power, per_sensor_noise=noise, validity=valid)

    if cross and options.resolve_cross_ambiguity:
        estimate = _coordinate_search(r, spec, estimate, np.array([0.0, math.pi / 4]))

    if options.grid_refine != "off":
        if options.grid_refine == "true" and true_snr_db is not None:
            gate_snr = true_snr_db
        else:
            gate_snr = 10.0 * math.log10(max(float(np.mean(gains**2)), 1e-300) / noise_power)
            if signal_dominated:
                gate_snr = math.inf
        if gate_snr >= options.grid_refine_snr_threshold_db:
            sector = 2.0 * math.pi / spec.symmetry_order
            fine = (np.arange(options.grid_points) - options.grid_points // 2) * sector / options.grid_points
            # Each sensor's blind estimate is ambiguous by 2 pi / K on its own; only a common rotation
            # is harmless, so every sector is searched to line the sensors up with each other.
            sectors = sector * np.arange(spec.symmetry_order) if n_sensors > 1 else np.zeros(1)
            offsets = (sectors[:, np.newaxis] + fine[np.newaxis, :]).ravel()
            estimate = _coordinate_search(r, spec, estimate, offsets)
            if from_grid:
                phases = estimate.phases
                estimate = estimate.with_noise_power(noise_grid())
    return estimate
