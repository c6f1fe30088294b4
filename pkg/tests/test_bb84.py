import math

import numpy as np
import pytest

from spqkd.errors import EstimationError
from spqkd.optics import ClickRecord, ClickTable
from spqkd.protocol.bb84 import alice_prepare, alice_prepare_arrays, bob_choose_basis, qber, sift
from spqkd.seeding import substream


def test_prepare_is_reproducible():
    a = alice_prepare(8, substream(1, "alice-bits"), substream(1, "alice-bases"))
    b = alice_prepare(8, substream(1, "alice-bits"), substream(1, "alice-bases"))
    assert a == b and [p.clock_index for p in a] == list(range(8))
    with pytest.raises(ValueError):
        alice_prepare(0, substream(1, "alice-bits"))


def test_state_bijection():
    from spqkd.protocol.bb84 import PreparedPulse
    assert [PreparedPulse(0, b, s).state for s in (0, 1) for b in (0, 1)] == ["H", "V", "D", "A"]


def test_basis_frequencies():
    n = 1_000_000
    _, bases = alice_prepare_arrays(n, substream(2, "alice-bits"), substream(2, "alice-bases"))
    assert abs(np.count_nonzero(bases == 0) - n / 2) <= 3 * math.sqrt(n / 4)
    rng = substream(2, "bob-bases")
    bob = np.array([bob_choose_basis(i, rng) for i in range(20_000)])
    assert abs(np.count_nonzero(bob == 0) - 10_000) <= 3 * math.sqrt(5_000)
    # independence from Alice's basis stream
    corr = np.corrcoef(bob, bases[:20_000])[0, 1]
    assert abs(corr) < 3 / math.sqrt(20_000)


def table(rows):
    rows = sorted(rows)
    c = np.array([r[0] for r in rows], dtype=np.int64)
    d = np.array([r[1] for r in rows], dtype=np.int64)
    return ClickTable(c, d, np.zeros(len(rows)), np.ones(len(rows), bool), np.zeros(len(rows), np.int8))


def test_sift_no_clicks():
    ka, kb = sift([0, 1], [0, 1], table([]))
    assert len(ka) == 0 and len(kb) == 0


def test_sift_noiseless_matches():
    bits = np.array([0, 1, 1, 0])
    bases = np.array([0, 0, 1, 1])
    ka, kb = sift(bits, bases, table([(i, 2 * bases[i] + bits[i]) for i in range(4)]))
    assert ka.bits.tolist() == kb.bits.tolist() == [0, 1, 1, 0]
    assert ka.clock_indices.tolist() == kb.clock_indices.tolist()


def test_sift_drops_mismatch_and_double_clicks():
    bits = np.array([0, 1, 1])
    bases = np.array([0, 0, 1])
    clicks = [(0, 2), (1, 0), (1, 1), (2, 3)]  # pulse 0 wrong basis, pulse 1 double click
    ka, kb = sift(bits, bases, table(clicks))
    assert ka.clock_indices.tolist() == [2] and kb.bits.tolist() == [1]
    recs = [ClickRecord(2, 3, 0.0, True), ClickRecord(0, 0, 0.0, False)]
    ka2, _ = sift(bits, bases, recs)
    assert ka2.clock_indices.tolist() == [2]


def test_sift_ratio_half():
    n = 1_000_000
    rng = substream(3, "x")
    bits, bases = alice_prepare_arrays(n, rng)
    bob = rng.integers(0, 2, n)
    ka, _ = sift(bits, bases, table(list(zip(range(n), 2 * bob + bits))))
    assert abs(len(ka) - n / 2) <= 3 * math.sqrt(n / 4)


def test_qber():
    assert qber(100, 0) == 0.0
    assert qber(50, 50) == 0.5
    assert qber(15797, 1046) == pytest.approx(0.0621, abs=5e-5)
    with pytest.raises(EstimationError):
        qber(0, 0)
