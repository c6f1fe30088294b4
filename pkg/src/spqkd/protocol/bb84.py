"""BB84 preparation, basis choice, sifting and QBER."""

from dataclasses import dataclass

import numpy as np

from ..errors import EstimationError
from ..optics import STATE_NAMES, ClickTable, state_of

RECTILINEAR, DIAGONAL = 0, 1
BASIS_NAMES = ("rectilinear", "diagonal")


@dataclass(frozen=True)
class PreparedPulse:
    clock_index: int
    bit: int
    basis: int

    @property
    def state(self) -> str:
        return STATE_NAMES[state_of(self.bit, self.basis)]


@dataclass
class SiftedKey:
    bits: np.ndarray
    clock_indices: np.ndarray

    def __len__(self):
        return len(self.bits)

    @property
    def length(self) -> int:
        return len(self.bits)


def alice_prepare(n_pulses: int, rng_bits: np.random.Generator,
                  rng_bases: np.random.Generator | None = None) -> list[PreparedPulse]:
    """Uniform i.i.d. bits and bases; pass one generator or one per stream."""
    bits, bases = alice_prepare_arrays(n_pulses, rng_bits, rng_bases)
    return [PreparedPulse(i, int(b), int(s)) for i, (b, s) in enumerate(zip(bits, bases))]


def alice_prepare_arrays(n_pulses, rng_bits, rng_bases=None):
    if n_pulses <= 0:
        raise ValueError("n_pulses must be > 0")
    rng_bases = rng_bits if rng_bases is None else rng_bases
    bits = rng_bits.integers(0, 2, n_pulses, dtype=np.int8)
    bases = rng_bases.integers(0, 2, n_pulses, dtype=np.int8)
    return bits, bases


def bob_choose_basis(clock_index: int, rng: np.random.Generator) -> int:
    # passive 50/50 routing; the clock index is for the record only
    return int(rng.integers(0, 2))


def single_click_pulses(gated: ClickTable):
    """Pulses with exactly one in-gate click, and the count of multi-click pulses.

    Returns (clock indices, detector ids, origins, n_multi).
    """
    clock = gated.clock_index
    if len(clock) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0, dtype=np.int8), 0
    uniq, first, counts = np.unique(clock, return_index=True, return_counts=True)
    single = counts == 1
    idx = first[single]
    return uniq[single], gated.detector_id[idx], gated.origin[idx], int(np.count_nonzero(~single))


def sift(alice_bits, alice_bases, bob_clicks) -> tuple[SiftedKey, SiftedKey]:
    """Keep single-click pulses whose detector basis matches Alice's basis.

    ``bob_clicks`` is a gated :class:`ClickTable` or a list of in-gate
    ``ClickRecord``.  Double-click pulses are discarded.
    """
    if isinstance(bob_clicks, ClickTable):
        gated = bob_clicks
    else:
        recs = [c for c in bob_clicks if c.in_gate]
        gated = ClickTable(
            np.array([c.clock_index for c in recs], dtype=np.int64),
            np.array([c.detector_id for c in recs], dtype=np.int64),
            np.array([c.time_offset_ps for c in recs], dtype=float),
            np.ones(len(recs), dtype=bool),
            np.zeros(len(recs), dtype=np.int8),
        )
    clock, det, _, _ = single_click_pulses(gated)
    alice_bits = np.asarray(alice_bits)
    alice_bases = np.asarray(alice_bases)
    keep = alice_bases[clock] == det // 2
    kept = clock[keep]
    return (SiftedKey(alice_bits[kept].astype(np.uint8), kept),
            SiftedKey((det[keep] % 2).astype(np.uint8), kept))


def qber(n_correct: int, n_incorrect: int) -> float:
    total = n_correct + n_incorrect
    if total <= 0:
        raise EstimationError("QBER of an empty sample is undefined")
    return n_incorrect / total
