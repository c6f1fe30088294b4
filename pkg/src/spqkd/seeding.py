"""Named random substreams derived from a single 64-bit seed.

Every subsystem draws from its own stream, so adding or removing draws in one
place (say, the dark-count generator) never shifts the bits another subsystem
sees.
"""

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream ``name`` under master ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, name: str) -> int:
    """A 64-bit integer seed for stream ``name`` (for values sent over the wire)."""
    return int(substream(seed, name).integers(0, 1 << 64, dtype=np.uint64))
