"""Counter-based random streams keyed by (master seed, work-unit key, purpose).

A stream depends only on its key, never on how many other streams were
drawn before it, so serial and parallel sweeps see identical randomness.
"""

from __future__ import annotations

import zlib

import numpy as np

PURPOSES = {"truth": 0, "channel": 1, "data": 2, "restart": 3}


def _key_word(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, (float, np.floating)):
        # Milli-unit resolution is plenty for SNR and delta style keys.
        return int(round(float(part) * 1000)) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(part).encode())


def stream(master_seed: int, *key, purpose: str = "data") -> np.random.Generator:
    """Return an independent generator for ``key`` under ``master_seed``."""
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    words = tuple(_key_word(part) for part in key) + (PURPOSES[purpose],)
    seq = np.random.SeedSequence(int(master_seed) & ((1 << 64) - 1), spawn_key=words)
    return np.random.Generator(np.random.PCG64(seq))
