import numpy as np
import pytest
from scipy.linalg import toeplitz

from spqkd.errors import InfeasibleParameters
from spqkd.protocol.privacy import privacy_amplify, toeplitz_diagonals

SEED = bytes(range(16))


def test_matches_explicit_matrix():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, 64, dtype=np.uint8)
    t = toeplitz_diagonals(SEED, 64, 24)
    # first column t[n-1:], first row t[n-1::-1]
    m = toeplitz(t[63:], t[63::-1])
    assert np.array_equal(privacy_amplify(x, 0, 24, SEED), (m.astype(int) @ x) % 2)


def test_full_length_and_determinism():
    x = np.random.default_rng(1).integers(0, 2, 200, dtype=np.uint8)
    y = privacy_amplify(x, 0, 200, SEED)
    assert len(y) == 200
    assert np.array_equal(y, privacy_amplify(x, 0, 200, SEED))


def test_target_too_long():
    with pytest.raises(InfeasibleParameters):
        privacy_amplify(np.zeros(100, np.uint8), 30, 71, SEED)
    with pytest.raises(ValueError):
        privacy_amplify(np.zeros(100, np.uint8), 0, 10, b"short")


def test_avalanche():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 2, 256, dtype=np.uint8)
    fracs = []
    for _ in range(1000):
        seed = rng.bytes(16)
        y = x.copy()
        y[rng.integers(256)] ^= 1
        fracs.append(np.mean(privacy_amplify(x, 0, 64, seed) != privacy_amplify(y, 0, 64, seed)))
    assert abs(np.mean(fracs) - 0.5) <= 0.05
