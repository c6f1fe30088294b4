"""CASCADE interactive error correction (Brassard and Salvail).

Bob holds the noisy key and drives the protocol; Alice only answers parity
questions about her key.  Pass 1 cuts the key into blocks of size k1, every
later pass doubles the block size and reorders the key with a permutation
drawn from the shared shuffle seed.  Each block whose parities disagree is
binary-searched down to a single wrong bit, and every correction re-opens the
blocks of earlier passes that contain it.

Binary searches over disjoint blocks run in lock-step, so one request frame
carries all the questions of a round; the disclosed information is the same
as running them one at a time.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from ..errors import InfeasibleParameters, ProtocolError
from ..rates import binary_entropy
from .wire import (
    Endpoint,
    MessageType as M,
    binsearch_parity_payload,
    binsearch_request_payload,
    endpoint_pair,
    parities_payload,
    parse_binsearch_parity,
    parse_binsearch_request,
    parse_parities,
    run_pair,
)

DEFAULT_PASSES = 4
DIGEST_BITS = 64
MIN_LENGTH = 16
_VERIFY_SALT = 0x5645_5249  # separates the digest seed from the shuffle seed


@dataclass
class ReconciliationResult:
    corrected_key: np.ndarray
    leaked_bits: int
    passes: int
    f_measured: float
    residual_error: bool
    corrections: int = 0
    digest_bits: int = DIGEST_BITS
    transcript_parity_bits: int | None = None


def initial_block_size(q_est: float, n: int) -> int:
    """k1 = ceil(0.73 / q), with q floored at 0.005 and k1 clamped to [4, n/2]."""
    k = math.ceil(0.73 / max(q_est, 0.005))
    return int(min(max(k, 4), max(n // 2, 1)))


def _check(n: int, q_est: float, strict: bool = True):
    if strict and n < MIN_LENGTH:
        raise InfeasibleParameters(f"CASCADE needs at least {MIN_LENGTH} bits, got {n}")
    if not 0 < q_est < 0.25:
        raise InfeasibleParameters(f"q_est must lie in (0, 0.25), got {q_est!r}")


class _Layout:
    def __init__(self, n: int, k1: int, passes: int, seed: int):
        self.n = n
        self.sizes = [min(k1 << p, n) for p in range(passes)]
        self.perms = [np.arange(n)]
        for p in range(1, passes):
            self.perms.append(np.random.default_rng([seed, p]).permutation(n))
        self.starts = [np.arange(0, n, k) for k in self.sizes]

    def block_parities(self, key: np.ndarray, p: int) -> np.ndarray:
        return np.bitwise_xor.reduceat(key[self.perms[p]], self.starts[p])

    def prefix(self, key: np.ndarray, p: int) -> np.ndarray:
        out = np.zeros(self.n + 1, dtype=np.uint8)
        np.bitwise_xor.accumulate(key[self.perms[p]], out=out[1:])
        return out


def subset_digest(key: np.ndarray, seed: int, bits: int = DIGEST_BITS) -> int:
    """Parities of ``bits`` random subsets of the key, packed MSB first."""
    rng = np.random.default_rng([seed, _VERIFY_SALT])
    masks = rng.integers(0, 2, size=(bits, len(key)), dtype=np.uint8)
    par = (masks.astype(np.int64) @ key.astype(np.int64)) & 1
    return int.from_bytes(np.packbits(par.astype(np.uint8)).tobytes(), "big")


def serve_cascade(ep: Endpoint, key_a, q_est: float, passes: int = DEFAULT_PASSES,
                  initial_block: int | None = None, strict: bool = True) -> int:
    """Alice's side: answer parity requests until Bob sends DONE.

    Returns the status byte carried by DONE (0 when Bob's digest matched).
    ``strict=False`` lifts the minimum key length, for hand-traced examples.
    """
    key = np.asarray(key_a, dtype=np.uint8)
    n = len(key)
    _check(n, q_est, strict)
    k1 = initial_block or initial_block_size(q_est, n)
    (seed,) = struct.unpack(">Q", ep.recv(M.SHUFFLE_SEED).payload)
    layout = _Layout(n, k1, passes, seed)
    prefix = np.stack([layout.prefix(key, p) for p in range(passes)])
    next_id = 0
    while True:
        msg = ep.recv()
        if msg.type == M.PARITIES:
            p, _ = parse_parities(msg.payload)
            if p >= passes:
                raise ProtocolError(f"parity request for pass {p} of {passes}")
            ep.send(M.PARITIES, parities_payload(p, layout.block_parities(key, p)))
        elif msg.type == M.BINSEARCH_REQUEST:
            q = parse_binsearch_request(msg.payload)
            p, lo, hi = (q["pass"].astype(np.int64), q["start"].astype(np.int64),
                         q["stop"].astype(np.int64))
            if len(q) and (p.max() >= passes or hi.max() > n or (lo >= hi).any()):
                raise ProtocolError("malformed sub-block request")
            par = prefix[p, hi] ^ prefix[p, lo]
            for v in par:
                ep.send(M.BINSEARCH_PARITY, binsearch_parity_payload(next_id, int(v)), flush=False)
                next_id += 1
            ep.flush()
        elif msg.type == M.VERIFY_DIGEST:
            (vseed,) = struct.unpack(">Q", msg.payload[:8])
            ep.send(M.VERIFY_DIGEST, struct.pack(">QQ", vseed, subset_digest(key, vseed)))
        elif msg.type == M.DONE:
            return msg.payload[0] if msg.payload else 0
        else:
            raise ProtocolError(f"unexpected {msg.type.name} during reconciliation")


class _Bob:
    def __init__(self, ep: Endpoint, key_b, q_est, seed, passes, initial_block, strict=True):
        self.ep = ep
        self.key = np.array(key_b, dtype=np.uint8)
        self.n = len(self.key)
        _check(self.n, q_est, strict)
        self.q_est = q_est
        self.seed = int(seed) & ((1 << 64) - 1)
        self.passes = passes
        self.layout = _Layout(self.n, initial_block or initial_block_size(q_est, self.n), passes, self.seed)
        self.alice_top = []
        self.leaked = 0
        self.corrections = 0
        self.next_id = 0

    def run(self) -> ReconciliationResult:
        self.ep.send(M.SHUFFLE_SEED, struct.pack(">Q", self.seed))
        for p in range(self.passes):
            self.ep.send(M.PARITIES, parities_payload(p, []))
            got_p, bits = parse_parities(self.ep.recv(M.PARITIES).payload)
            if got_p != p or len(bits) != len(self.layout.starts[p]):
                raise ProtocolError("parity reply does not match the request")
            self.alice_top.append(bits)
            self.leaked += len(bits)
            while True:
                items = self._odd_blocks(p)
                if not items:
                    break
                self._search(items)
        residual = self._verify()
        self.ep.send(M.DONE, bytes([int(residual)]))
        h = binary_entropy(self.q_est)
        return ReconciliationResult(
            corrected_key=self.key,
            leaked_bits=self.leaked,
            passes=self.passes,
            f_measured=self.leaked / (self.n * h),
            residual_error=residual,
            corrections=self.corrections,
        )

    def _odd_blocks(self, upto: int):
        """Mutually disjoint blocks with mismatched parity, smallest blocks first."""
        lay = self.layout
        claimed = np.zeros(self.n, dtype=bool)
        items = []
        for q in range(upto + 1):
            odd = np.flatnonzero(lay.block_parities(self.key, q) != self.alice_top[q])
            k = lay.sizes[q]
            for b in odd:
                s, e = int(b) * k, min((int(b) + 1) * k, self.n)
                pos = lay.perms[q][s:e]
                if claimed[pos].any():
                    continue
                claimed[pos] = True
                items.append((q, s, e, int(self.alice_top[q][b])))
        return items

    def _search(self, items):
        lay = self.layout
        while items:
            open_items = []
            for q, s, e, a in items:
                if e - s == 1:
                    i = lay.perms[q][s]
                    if self.key[i] != a:
                        self.key[i] ^= 1
                        self.corrections += 1
                else:
                    open_items.append((q, s, e, a))
            if not open_items:
                return
            queries = [(q, s, (s + e) // 2) for q, s, e, _ in open_items]
            self.ep.send(M.BINSEARCH_REQUEST, binsearch_request_payload(queries))
            answers = []
            for _ in queries:
                block_id, par = parse_binsearch_parity(self.ep.recv(M.BINSEARCH_PARITY).payload)
                if block_id != self.next_id & 0xFFFFFFFF:
                    raise ProtocolError("binary-search answers out of order")
                self.next_id += 1
                answers.append(par)
            self.leaked += len(answers)
            prefixes = {q: lay.prefix(self.key, q) for q in {it[0] for it in open_items}}
            items = []
            for (q, s, e, a), al in zip(open_items, answers):
                m = (s + e) // 2
                px = prefixes[q]
                if px[m] ^ px[s] != al:
                    items.append((q, s, m, al))
                else:
                    items.append((q, m, e, a ^ al))

    def _verify(self) -> bool:
        vseed = int(np.random.default_rng([self.seed, _VERIFY_SALT]).integers(0, 1 << 64, dtype=np.uint64))
        self.ep.send(M.VERIFY_DIGEST, struct.pack(">Q", vseed))
        got_seed, word = struct.unpack(">QQ", self.ep.recv(M.VERIFY_DIGEST).payload)
        if got_seed != vseed:
            raise ProtocolError("digest seed mismatch")
        return word != subset_digest(self.key, vseed)


def reconcile_bob(ep: Endpoint, key_b, q_est: float, seed: int, passes: int = DEFAULT_PASSES,
                  initial_block: int | None = None, strict: bool = True) -> ReconciliationResult:
    """Bob's side of CASCADE over ``ep``; returns his corrected key and the leak count."""
    return _Bob(ep, key_b, q_est, seed, passes, initial_block, strict).run()


def cascade_reconcile(key_a, key_b, q_est: float, seed: int = 0, transport: str = "inproc",
                      passes: int = DEFAULT_PASSES, initial_block: int | None = None,
                      strict: bool = True) -> ReconciliationResult:
    """Run both CASCADE endpoints over a fresh transport."""
    key_a = np.asarray(key_a, dtype=np.uint8)
    key_b = np.asarray(key_b, dtype=np.uint8)
    if key_a.shape != key_b.shape:
        raise InfeasibleParameters("keys differ in length")
    _check(len(key_a), q_est, strict)
    alice, bob = endpoint_pair(transport)
    try:
        _, result = run_pair(
            lambda ep: serve_cascade(ep, key_a, q_est, passes, initial_block, strict),
            lambda ep: reconcile_bob(ep, key_b, q_est, seed, passes, initial_block, strict),
            alice, bob,
        )
    finally:
        alice.close()
        bob.close()
    result.transcript_parity_bits = alice.sent_parity_bits()
    return result
