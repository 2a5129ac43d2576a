"""Seeded random streams.

All randomness in the package flows from one user seed through Philox, a
counter-based generator that can be split into independent streams. Stream
splitting keys on (seed, stream), so per-image or per-scene work draws from
its own stream and results do not depend on scheduling order.
"""

import numpy as np


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
