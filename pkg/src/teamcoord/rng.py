"""Counter-based random streams keyed by (seed, stage, index)."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """Independent Philox stream for one (seed, stage, index) triple."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, zlib.crc32(stage.encode()), index])
    return np.random.Generator(np.random.Philox(ss))
