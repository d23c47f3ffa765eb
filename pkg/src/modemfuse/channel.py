"""Multi-sensor flat block-fading channel: realizations, synthesis and IQ file I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constellation import ConstellationSpec
from .errors import ConfigurationError, InputError

IQ_HEADER = ("sensor", "n", "re", "im")


@dataclass(frozen=True)
class FadingModel:
    """Rayleigh amplitude fading with scale ``rayleigh_scale`` (E{a^2} = 2 sigma^2)."""

    rayleigh_scale: float = math.sqrt(0.5)

    def __post_init__(self):
        if not self.rayleigh_scale > 0:
            raise ConfigurationError(f"Rayleigh scale must be positive, got {self.rayleigh_scale}")

    @classmethod
    def from_average_power(cls, average_power: float) -> FadingModel:
        if not average_power > 0:
            raise ConfigurationError(f"average channel power must be positive, got {average_power}")
        return cls(math.sqrt(average_power / 2.0))

    @property
    def average_power(self) -> float:
        return 2.0 * self.rayleigh_scale**2


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per-sensor gains and phases plus the common noise power N0."""

    gains: np.ndarray
    phases: np.ndarray
    noise_power: float

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=float)).copy()
        phases = np.atleast_1d(np.asarray(self.phases, dtype=float)).copy()
        if gains.ndim != 1 or gains.shape != phases.shape or gains.size < 1:
            raise ConfigurationError("gains and phases must be equal-length, non-empty vectors")
        if np.any(gains < 0):
            raise ConfigurationError("channel gains must be non-negative")
        if not self.noise_power > 0:
            raise ConfigurationError(f"noise power must be positive, got {self.noise_power}")
        gains.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def sensor_count(self) -> int:
        return self.gains.size

    @property
    def coefficients(self) -> np.ndarray:
        """Complex per-sensor channel coefficients a_l exp(j theta_l)."""
        return self.gains * np.exp(1j * self.phases)


@dataclass(frozen=True, eq=False)
class ObservationBlock:
    """L x N complex baseband samples, one row per sensor."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InputError(f"observation block must be a non-empty L x N matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            bad = np.argwhere(~np.isfinite(samples))[0]
            raise InputError(f"non-finite sample at sensor {bad[0]}, n={bad[1]}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def sensor_count(self) -> int:
        return self.samples.shape[0]

    @property
    def block_length(self) -> int:
        return self.samples.shape[1]


def as_samples(r) -> np.ndarray:
    """Return the L x N sample matrix of an ObservationBlock or array-like."""
    if isinstance(r, ObservationBlock):
        return r.samples
    arr = np.asarray(r, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    return arr


def sample_channel(rng: np.random.Generator, sensor_count: int, fading: FadingModel,
                   noise_power: float) -> ChannelRealization:
    """Draw independent Rayleigh gains and uniform [-pi, pi) phases for each sensor."""
    if int(sensor_count) != sensor_count or sensor_count < 1:
        raise ConfigurationError(f"sensor count must be a positive integer, got {sensor_count}")
    if not noise_power > 0:
        raise ConfigurationError(f"noise power must be positive, got {noise_power}")
    gains = rng.rayleigh(fading.rayleigh_scale, size=int(sensor_count))
    phases = rng.uniform(-np.pi, np.pi, size=int(sensor_count))
    return ChannelRealization(gains, phases, noise_power)


def synthesize(rng: np.random.Generator, spec: ConstellationSpec, channel: ChannelRealization,
               block_length: int) -> tuple[ObservationBlock, np.ndarray]:
    """Generate r[l, n] = a_l exp(j theta_l) I_n + w[l, n].

    All sensors see the same symbol sequence; the noise is circular complex
    Gaussian with total variance N0, independent across sensors and samples.

    Returns:
        The observation block and the transmitted symbol indices (length N).
    """
    if int(block_length) != block_length or block_length < 1:
        raise ConfigurationError(f"block length must be a positive integer, got {block_length}")
    n = int(block_length)
    indices = rng.integers(0, spec.size, size=n)
    symbols = spec.symbols[indices]
    scale = math.sqrt(channel.noise_power / 2.0)
    noise = rng.normal(0.0, scale, size=(channel.sensor_count, n, 2))
    noise = noise[..., 0] + 1j * noise[..., 1]
    samples = channel.coefficients[:, np.newaxis] * symbols[np.newaxis, :] + noise
    return ObservationBlock(samples), indices


def average_snr_db(fading: FadingModel | float, noise_power: float) -> float:
    """10 log10(2 sigma^2 / N0); ``fading`` may also be the average power 2 sigma^2."""
    if not noise_power > 0:
        raise ConfigurationError(f"noise power must be positive, got {noise_power}")
    power = fading.average_power if isinstance(fading, FadingModel) else float(fading)
    return 10.0 * math.log10(power / noise_power)


def instantaneous_snr_db(gain, noise_power: float):
    """10 log10(a^2 / N0) for one gain or an array of gains."""
    if not noise_power > 0:
        raise ConfigurationError(f"noise power must be positive, got {noise_power}")
    return 10.0 * np.log10(np.asarray(gain, dtype=float) ** 2 / noise_power)


def noise_power_for_snr(snr_db: float, average_power: float = 1.0) -> float:
    return average_power / 10.0 ** (snr_db / 10.0)


def write_iq_block(block: ObservationBlock | np.ndarray, path: str | Path) -> None:
    """Write samples as ``sensor,n,re,im`` CSV with round-trip-exact floats."""
    samples = as_samples(block)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IQ_HEADER)
        for l, row in enumerate(samples):
            for n, value in enumerate(row):
                writer.writerow((l, n, repr(float(value.real)), repr(float(value.imag))))


def load_iq_block(path: str | Path, format_descriptor: str = "csv") -> ObservationBlock:
    """Read an IQ CSV file into an ObservationBlock.

    The rows may come in any order but must cover a complete L x N grid
    exactly once. A header line ``sensor,n,re,im`` is accepted but optional.

    Raises:
        InputError: on parse failures, duplicate or missing cells, or
            non-finite values; messages name the offending line.
    """
    if format_descriptor.lower() != "csv":
        raise InputError(f"unsupported IQ format {format_descriptor!r}")
    cells: dict[tuple[int, int], complex] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if lineno == 1 and tuple(f.strip().lower() for f in row) == IQ_HEADER:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                sensor, n = int(row[0]), int(row[1])
                re_part, im_part = float(row[2]), float(row[3])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            if sensor < 0 or n < 0:
                raise InputError(f"{path}:{lineno}: negative sensor or sample index")
            if not (math.isfinite(re_part) and math.isfinite(im_part)):
                raise InputError(f"{path}:{lineno}: non-finite value at sensor {sensor}, n={n}")
            if (sensor, n) in cells:
                raise InputError(f"{path}:{lineno}: duplicate sample sensor {sensor}, n={n}")
            cells[(sensor, n)] = complex(re_part, im_part)
    if not cells:
        raise InputError(f"{path}: no samples")
    sensors = 1 + max(key[0] for key in cells)
    lengths = [0] * sensors
    for sensor, n in cells:
        lengths[sensor] = max(lengths[sensor], n + 1)
    n_max = max(lengths)
    for sensor in range(sensors):
        count = sum(1 for key in cells if key[0] == sensor)
        if count != n_max:
            raise InputError(
                f"{path}: dimension mismatch, sensor {sensor} has {count} samples, expected {n_max}")
    samples = np.empty((sensors, n_max), dtype=np.complex128)
    for (sensor, n), value in cells.items():
        samples[sensor, n] = value
    return ObservationBlock(samples)
