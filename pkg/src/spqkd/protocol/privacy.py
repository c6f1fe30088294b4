"""Privacy amplification by Toeplitz hashing.

A random binary Toeplitz matrix is a two-universal hash family, so the
compressed key is close to uniform for an adversary holding at most
``disclosed_bits`` plus whatever the rate bound already charges.
"""

import numpy as np
from scipy import signal

from ..errors import InfeasibleParameters

SEED_BYTES = 16


def toeplitz_diagonals(seed: bytes, n_in: int, n_out: int) -> np.ndarray:
    """The m + n - 1 diagonal bits defining an m x n Toeplitz matrix."""
    if len(seed) != SEED_BYTES:
        raise ValueError(f"hash seed must be {SEED_BYTES} bytes")
    rng = np.random.default_rng(int.from_bytes(seed, "big"))
    return rng.integers(0, 2, n_in + n_out - 1, dtype=np.uint8)


def toeplitz_hash(key, seed: bytes, target_len: int) -> np.ndarray:
    x = np.asarray(key, dtype=np.uint8) & 1
    n = len(x)
    if target_len == 0:
        return np.zeros(0, dtype=np.uint8)
    t = toeplitz_diagonals(seed, n, target_len)
    # row i of the matrix is t[i + n - 1 - j], so the product is a slice of the convolution
    full = signal.convolve(t.astype(float), x.astype(float))
    return (np.rint(full[n - 1:n - 1 + target_len]).astype(np.int64) & 1).astype(np.uint8)


def privacy_amplify(key, disclosed_bits: int, target_len: int, seed: bytes) -> np.ndarray:
    """Compress ``key`` to ``target_len`` bits with the Toeplitz family picked by ``seed``."""
    n = len(key)
    if target_len < 0 or disclosed_bits < 0:
        raise InfeasibleParameters("lengths must be non-negative")
    if target_len > n - disclosed_bits:
        raise InfeasibleParameters(
            f"target length {target_len} exceeds key length {n} minus {disclosed_bits} disclosed bits")
    return toeplitz_hash(key, seed, target_len)
