"""Candidate modulation catalog.

Every constellation is normalized to unit average symbol energy and carries
the symbol moments consumed by the blind estimators and the likelihood.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULT_FORMATS = ("16qam", "32qam", "64qam")

_FORMAT_RE = re.compile(r"^(\d+)[-_]?(qam|psk)$")


@dataclass(frozen=True, eq=False)
class ConstellationSpec:
    """A normalized symbol set plus its cached moments.

    Attributes:
        format_id: Lower-case identifier such as ``"16qam"`` or ``"8psk"``.
        symbols: Read-only complex array of the M symbols.
        symmetry_order: K such that the set is invariant under rotation by 2*pi/K.
        fourth_moment: E{|I|^4}.
        kth_conj_moment: E{conj(I)^K}.
        eighth_moment: E{I^8}.
    """

    format_id: str
    symbols: np.ndarray = field(repr=False)
    symmetry_order: int
    fourth_moment: float = field(init=False)
    kth_conj_moment: complex = field(init=False)
    eighth_moment: complex = field(init=False)

    def __post_init__(self):
        symbols = np.array(self.symbols, dtype=np.complex128).ravel()
        symbols.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)
        fourth, kth, eighth = _moments(symbols, self.symmetry_order)
        object.__setattr__(self, "fourth_moment", fourth)
        object.__setattr__(self, "kth_conj_moment", kth)
        object.__setattr__(self, "eighth_moment", eighth)

    @property
    def size(self) -> int:
        return self.symbols.size

    @property
    def energies(self) -> np.ndarray:
        """|I^m|^2 for every symbol."""
        return np.abs(self.symbols) ** 2

    def __repr__(self):
        return f"ConstellationSpec({self.format_id!r}, M={self.size}, K={self.symmetry_order})"


def _moments(symbols: np.ndarray, k: int) -> tuple[float, complex, complex]:
    fourth = float(np.mean(np.abs(symbols) ** 4))
    kth = complex(np.mean(np.conj(symbols) ** k))
    eighth = complex(np.mean(symbols**8))
    return fourth, kth, eighth


def cached_moments(spec: ConstellationSpec) -> tuple[float, complex, complex]:
    """Return ``(E|I|^4, E{conj(I)^K}, E{I^8})`` for ``spec``."""
    return spec.fourth_moment, spec.kth_conj_moment, spec.eighth_moment


def _normalize(points: np.ndarray) -> np.ndarray:
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def _grid(levels: np.ndarray) -> np.ndarray:
    # Row-major: imaginary coordinate selects the row, real coordinate the column.
    re_part, im_part = np.meshgrid(levels, levels, indexing="xy")
    return (re_part + 1j * im_part).ravel()


def square_qam(order: int) -> np.ndarray:
    side = int(round(np.sqrt(order)))
    if side * side != order or side < 2:
        raise ConfigurationError(f"square QAM needs a perfect-square order, got {order}")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    return _normalize(_grid(levels))


def cross_qam(order: int) -> np.ndarray:
    """Cross QAM for M = 2^(2k+1) >= 32, e.g. 32-QAM as a 6x6 grid minus its corners."""
    half = order // 2
    inner = int(round(np.sqrt(half)))
    if order < 32 or inner * inner != half or inner % 4:
        raise ConfigurationError(f"cross QAM needs M = 2^(2k+1) >= 32, got {order}")
    side = inner + inner // 2
    corner = inner // 4
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = _grid(levels)
    # Drop the corner x corner block at each corner of the grid.
    limit = side - 1 - 2 * corner
    keep = ~((np.abs(points.real) > limit) & (np.abs(points.imag) > limit))
    return _normalize(points[keep])


def psk(order: int, offset: float | None = None) -> np.ndarray:
    if order < 2:
        raise ConfigurationError(f"PSK order must be >= 2, got {order}")
    if offset is None:
        offset = np.pi / 4 if order == 4 else 0.0
    return np.exp(1j * (offset + 2 * np.pi * np.arange(order) / order))


def build_constellation(format_id: str) -> ConstellationSpec:
    """Build a catalog constellation.

    Args:
        format_id: ``"<M>qam"`` (square or cross) or ``"<M>psk"``, case-insensitive.

    Raises:
        ConfigurationError: if the format is not supported.
    """
    key = str(format_id).strip().lower()
    match = _FORMAT_RE.match(key)
    if not match:
        raise ConfigurationError(f"unsupported modulation format {format_id!r}")
    order, family = int(match.group(1)), match.group(2)
    key = f"{order}{family}"
    if family == "psk":
        return ConstellationSpec(key, psk(order), symmetry_order=order)
    side = int(round(np.sqrt(order)))
    if side * side == order:
        return ConstellationSpec(key, square_qam(order), symmetry_order=4)
    return ConstellationSpec(key, cross_qam(order), symmetry_order=4)


def parse_candidates(text: str) -> list[ConstellationSpec]:
    """Parse a comma-separated format list such as ``"16qam,32qam,64qam"``."""
    names = [part for part in (p.strip() for p in text.split(",")) if part]
    if not names:
        raise ConfigurationError("empty candidate list")
    return [build_constellation(name) for name in names]
