"""Deterministic random stream derivation.

All randomness in the package flows from a single 64-bit master seed.
Named substreams are split off with ``numpy.random.SeedSequence`` spawn
keys, so adding draws to one stream never shifts another.
"""

from __future__ import annotations

import numpy as np

# Stream ids. Values are part of the on-disk reproducibility contract;
# never renumber.
STREAM_BITS = 0
STREAM_SLICE_NOISE = 1
STREAM_W_IN = 2
STREAM_W_RES = 3
STREAM_OUT_MASK = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for (seed, key).

    The same (seed, key) pair always yields the same stream, and
    distinct keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
