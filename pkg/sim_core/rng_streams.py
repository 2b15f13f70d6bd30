"""Counter-based random streams.

Every stochastic step draws from a Philox generator keyed by (seed, purpose, event_id), so an
event's result does not depend on which worker handled it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

# Purpose tags; each name is hashed with crc32 into the key, so renaming one reshuffles its stream.
STREAM_SCHEDULE = "schedule"
STREAM_GEOMETRY = "geometry"
STREAM_PAIRS = "pairs"
STREAM_TRANSPORT = "transport"
STREAM_NOISE = "noise"
STREAM_DIPOLE = "dipole"
STREAM_PDF = "pdf"
STREAM_CYCLES = "cycles"
STREAM_BOOTSTRAP = "bootstrap"
STREAM_DROPOUT = "dropout"


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def event_rng(seed: int, purpose: str, event_id: int = 0, *extra: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose, event_id) triple."""
    entropy = [int(seed) & 0xFFFFFFFF, _purpose_key(purpose), int(event_id), *[int(e) for e in extra]]
    seq = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (fresh entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
