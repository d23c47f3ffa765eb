"""Blind method-of-moments estimators and known-symbol ML estimators.

The blind estimators (M2M4 gain/noise, Kth-power and eighth-order phase)
provide EM starting points; ``ml_known_symbols`` is the closed-form
maximizer used when the transmitted symbols are known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .constellation import ConstellationSpec
from .errors import ConfigurationError, DegenerateInputError, EstimatorInapplicableError

# Below this magnitude a symbol moment is treated as zero.
_MOMENT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class NuisanceEstimate:
    """Estimated channel parameters u = [a, theta, N0].

    ``per_sensor_noise`` and ``validity`` hold the pre-fusion M2M4 outputs
    when the estimate came from the moment initializer; they are ``None``
    otherwise.
    """

    gains: np.ndarray
    phases: np.ndarray
    noise_power: float
    per_sensor_noise: Optional[np.ndarray] = None
    validity: Optional[np.ndarray] = None

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=float)).copy()
        phases = np.atleast_1d(np.asarray(self.phases, dtype=float)).copy()
        if gains.shape != phases.shape or gains.ndim != 1:
            raise ConfigurationError("gains and phases must be equal-length vectors")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "noise_power", float(self.noise_power))
        for name in ("per_sensor_noise", "validity"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value)
                if value.shape != gains.shape:
                    raise ConfigurationError(f"{name} must have one entry per sensor")
                object.__setattr__(self, name, value.copy())

    @property
    def sensor_count(self) -> int:
        return self.gains.size

    @property
    def coefficients(self) -> np.ndarray:
        return self.gains * np.exp(1j * self.phases)

    def with_phases(self, phases) -> NuisanceEstimate:
        return NuisanceEstimate(self.gains, phases, self.noise_power,
                                self.per_sensor_noise, self.validity)

    def with_noise_power(self, noise_power: float) -> NuisanceEstimate:
        return NuisanceEstimate(self.gains, self.phases, noise_power,
                                self.per_sensor_noise, self.validity)


def wrap_phase(theta):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(theta, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def sample_moments(r_l) -> tuple[float, float]:
    """Sample second and fourth moments of |r| for one sensor."""
    power = np.abs(np.asarray(r_l, dtype=np.complex128).ravel()) ** 2
    if power.size == 0:
        raise ConfigurationError("sample_moments needs at least one sample")
    return float(np.mean(power)), float(np.mean(power**2))


def m2m4_amplitude_noise(r_l, spec: ConstellationSpec) -> tuple[float, float, bool]:
    """M2M4 gain and noise-power estimates for one sensor.

    a^4 = (2 M2^2 - M4) / (2 - E|I|^4) and N0 = M2 - a^2. When the radicand is
    negative the gain falls back to sqrt(M2) (all power attributed to the
    signal); that case and any N0 <= 0 are reported through the flag.

    Returns:
        ``(a_hat, n0_hat, valid)``
    """
    m2, m4 = sample_moments(r_l)
    denominator = 2.0 - spec.fourth_moment
    if abs(denominator) < _MOMENT_EPS:
        raise EstimatorInapplicableError(f"M2M4 undefined for {spec.format_id}: E|I|^4 = 2")
    radicand = (2.0 * m2 * m2 - m4) / denominator
    if radicand < 0:
        a_hat = float(np.sqrt(m2))
        return a_hat, m2 - a_hat**2, False
    a_hat = float(radicand**0.25)
    n0_hat = m2 - a_hat**2
    return a_hat, n0_hat, bool(n0_hat > 0)


def fuse_noise_estimates(per_sensor_noise, validity, fallback: Callable[[], float] | None = None,
                         mode: str = "mean") -> float:
    """Combine per-sensor N0 estimates, keeping only valid positive ones.

    Args:
        per_sensor_noise: N0 estimate per sensor, possibly negative.
        validity: flag per sensor from :func:`m2m4_amplitude_noise`.
        fallback: called when no estimate is usable.
        mode: ``"mean"`` (default) or ``"sum"`` over the usable estimates.
    """
    values = np.asarray(per_sensor_noise, dtype=float).ravel()
    flags = np.asarray(validity, dtype=bool).ravel()
    if values.size < 1 or values.shape != flags.shape:
        raise ConfigurationError("need one validity flag per noise estimate")
    usable = values[flags & (values > 0) & np.isfinite(values)]
    if usable.size == 0:
        if fallback is None:
            raise DegenerateInputError("no usable noise estimate and no fallback given")
        return float(fallback())
    if mode == "mean":
        return float(np.mean(usable))
    if mode == "sum":
        return float(np.sum(usable))
    raise ConfigurationError(f"unknown noise fusion mode {mode!r}")


def kth_power_phase(r_l, spec: ConstellationSpec) -> float:
    """K-th power blind phase estimate, wrapped to (-pi/K, pi/K]."""
    k = spec.symmetry_order
    if abs(spec.kth_conj_moment) < _MOMENT_EPS:
        raise EstimatorInapplicableError(
            f"E{{conj(I)^{k}}} vanishes for {spec.format_id}; use eighth_order_phase")
    r_l = np.asarray(r_l, dtype=np.complex128).ravel()
    statistic = spec.kth_conj_moment * np.sum(r_l**k)
    return float(np.angle(statistic)) / k


def eighth_order_phase(r_l, spec: ConstellationSpec) -> float:
    """Eighth-order blind phase estimate, wrapped to (-pi/8, pi/8].

    The result is ambiguous by multiples of pi/4; callers resolve it by
    scoring the candidate rotations with the likelihood.
    """
    if abs(spec.eighth_moment) < _MOMENT_EPS:
        raise EstimatorInapplicableError(f"E{{I^8}} vanishes for {spec.format_id}")
    r_l = np.asarray(r_l, dtype=np.complex128).ravel()
    statistic = np.conj(spec.eighth_moment) * np.sum(r_l**8)
    return float(np.angle(statistic)) / 8.0


def ml_known_symbols(r, symbols) -> NuisanceEstimate:
    """Closed-form ML estimate of (a, theta, N0) given the transmitted symbols.

    Args:
        r: L x N observations (a length-N vector is treated as L = 1).
        symbols: the N transmitted symbols.
    """
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim == 1:
        r = r[np.newaxis, :]
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    if symbols.size != r.shape[1]:
        raise ConfigurationError(f"{symbols.size} symbols for {r.shape[1]} samples")
    energy = float(np.vdot(symbols, symbols).real)
    if energy <= 0:
        raise DegenerateInputError("all-zero symbol vector")
    correlation = r @ np.conj(symbols)
    phases = wrap_phase(np.arctan2(correlation.imag, correlation.real))
    gains = np.real(np.exp(-1j * phases) * correlation) / energy
    residual = r - (gains * np.exp(1j * phases))[:, np.newaxis] * symbols[np.newaxis, :]
    noise = float(np.mean(np.abs(residual) ** 2))
    return NuisanceEstimate(gains, phases, noise)
