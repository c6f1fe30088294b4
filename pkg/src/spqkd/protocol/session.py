"""End-to-end session: pulse simulation, sifting, QBER, CASCADE and hashing."""

from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from ..errors import ProtocolError
from ..optics import simulate_clicks
from ..rates import delta_for, gllp_factor
from ..scenario import Scenario
from ..seeding import derive_seed, substream
from ..source import pn_distribution, sample_photon_number
from .bb84 import alice_prepare_arrays, qber, sift, single_click_pulses
from .cascade import DIGEST_BITS, MIN_LENGTH, reconcile_bob, serve_cascade
from .privacy import SEED_BYTES, privacy_amplify
from .wire import (
    INPROC,
    MessageType as M,
    counted_bits_payload,
    endpoint_pair,
    parse_counted_bits,
    parse_sift_bases,
    run_pair,
    sift_bases_payload,
)

OK = "ok"
TOO_SHORT = "too-short"
QBER_ABORT = "qber-abort"
VERIFY_FAILED = "verify-failed"


@dataclass
class SessionReport:
    label: str
    seed: int
    n_pulses: int
    transport: str
    status: str
    n_clicks_in_gate: int
    n_multi_click: int
    n_single_click: int
    n_sifted: int
    n_errors: int
    q: float
    r_sifted_hz: float
    leaked_bits: int = 0
    digest_bits: int = 0
    f_measured: float = math.nan
    residual_error: bool = False
    corrections: int = 0
    final_length: int = 0
    alice_sifted: np.ndarray = field(default=None, repr=False)
    bob_sifted: np.ndarray = field(default=None, repr=False)
    bob_corrected: np.ndarray = field(default=None, repr=False)
    final_alice: np.ndarray = field(default=None, repr=False)
    final_bob: np.ndarray = field(default=None, repr=False)
    transcript_digest: str = ""

    def fingerprint(self) -> str:
        """sha256 over every field, arrays included; equal iff the reports match."""
        h = hashlib.sha256()
        for name, value in vars(self).items():
            if name == "transport":
                continue
            h.update(name.encode())
            if isinstance(value, np.ndarray):
                h.update(np.asarray(value, dtype=np.uint8).tobytes())
            else:
                h.update(repr(value).encode())
        return h.hexdigest()


def _streams(seed: int, n_detectors: int) -> dict:
    names = ["channel"] + [f"detector-{d}" for d in range(n_detectors)] + [f"dark-{d}" for d in range(n_detectors)]
    return {name: substream(seed, name) for name in names}


def pa_length(q: float, delta: float, f_p: float, n_sifted: int, leaked: int) -> int:
    """Secure fraction of the sifted key less the verification digest, never negative."""
    frac = gllp_factor(q, delta, f_p)
    if not math.isfinite(frac):
        return 0
    n = math.floor(frac * n_sifted) - DIGEST_BITS
    return max(0, min(n, n_sifted - leaked - DIGEST_BITS))


def run_session(scenario: Scenario, n_pulses: int, transport: str = INPROC, seed: int | None = None) -> SessionReport:
    """Simulate ``n_pulses`` clock cycles and post-process the result over ``transport``."""
    seed = scenario.seed if seed is None else int(seed)
    src = scenario.source

    # quantum layer
    dist = pn_distribution(src.mu, src.g2)
    n_photons = sample_photon_number(dist, substream(seed, "source"), n_pulses)
    a_bits, a_bases = alice_prepare_arrays(n_pulses, substream(seed, "alice-bits"), substream(seed, "alice-bases"))
    b_bases = substream(seed, "bob-bases").integers(0, 2, n_pulses, dtype=np.int8)
    clicks = simulate_clicks(
        n_photons, (2 * a_bases + a_bits).astype(np.int64), b_bases, scenario.link, scenario.detector,
        scenario.time_model(), scenario.gate, scenario.clock_hz, _streams(seed, scenario.detector.count),
        misalignment=scenario.misalignment_error_prob, coupling=src.coupling_efficiency,
    ).gated()
    clock, det, _, n_multi = single_click_pulses(clicks)

    # simulation-truth error count, independent of the classical exchange
    truth_a, truth_b = sift(a_bits, a_bases, clicks)
    truth_errors = int(np.count_nonzero(truth_a.bits != truth_b.bits))
    n_sifted = len(truth_a)
    q = qber(n_sifted - truth_errors, truth_errors) if n_sifted else math.nan

    threshold = min(scenario.analysis.qber_threshold, 0.25)
    if n_sifted < MIN_LENGTH:
        status = TOO_SHORT
    elif q >= threshold:
        status = QBER_ABORT
    else:
        status = OK
    # CASCADE needs a positive error estimate; with no observed errors use 1/n
    q_est = max(q, 1.0 / n_sifted) if status == OK else math.nan
    delta = delta_for(scenario)
    f_p = scenario.analysis.f_p
    cascade_seed = derive_seed(seed, "cascade-shuffle")
    pa_seed = substream(seed, "pa").bytes(SEED_BYTES)

    def alice(ep):
        idx, bob_b = parse_sift_bases(ep.recv(M.SIFT_BASES).payload)
        keep = a_bases[idx] == bob_b
        ep.send(M.SIFT_KEEP, counted_bits_payload(keep))
        key = a_bits[idx[keep]].astype(np.uint8)
        out = {"sifted": key, "final": np.zeros(0, dtype=np.uint8)}
        if status != OK:
            ep.recv(M.DONE)
            return out
        residual = serve_cascade(ep, key, q_est)
        leaked = ep.sent_parity_bits()
        if residual == 0:
            ep.send(M.PA_SEED, pa_seed)
            length = pa_length(q, delta, f_p, len(key), leaked)
            if length:
                out["final"] = privacy_amplify(key, leaked + DIGEST_BITS, length, pa_seed)
        ep.recv(M.DONE)
        return out

    def bob(ep):
        # Bob announces his bases first
        ep.send(M.SIFT_BASES, sift_bases_payload(clock, det // 2))
        keep = parse_counted_bits(ep.recv(M.SIFT_KEEP).payload).astype(bool)
        key = (det[keep] % 2).astype(np.uint8)
        out = {"sifted": key, "corrected": key, "final": np.zeros(0, dtype=np.uint8), "result": None}
        if status == OK:
            res = reconcile_bob(ep, key, q_est, cascade_seed)
            out["result"] = res
            out["corrected"] = res.corrected_key
            if not res.residual_error:
                seed_bytes = ep.recv(M.PA_SEED).payload
                length = pa_length(q, delta, f_p, len(key), res.leaked_bits)
                if length:
                    out["final"] = privacy_amplify(res.corrected_key, res.leaked_bits + DIGEST_BITS, length, seed_bytes)
        ep.send(M.DONE, bytes([0]))
        return out

    a_ep, b_ep = endpoint_pair(transport)
    try:
        a_out, b_out = run_pair(alice, bob, a_ep, b_ep)
    finally:
        a_ep.close()
        b_ep.close()

    # key comparison path must agree with the truth path
    cmp_errors = int(np.count_nonzero(a_out["sifted"] != b_out["sifted"]))
    if len(a_out["sifted"]) != n_sifted or cmp_errors != truth_errors:
        raise ProtocolError("sifted-key comparison disagrees with simulation truth")

    res = b_out["result"]
    if res is not None and res.residual_error:
        status = VERIFY_FAILED
    transcript = hashlib.sha256((a_ep.sent_digest + b_ep.sent_digest).encode()).hexdigest()
    return SessionReport(
        label=scenario.label,
        seed=seed,
        n_pulses=n_pulses,
        transport=transport,
        status=status,
        n_clicks_in_gate=len(clicks),
        n_multi_click=n_multi,
        n_single_click=len(clock),
        n_sifted=n_sifted,
        n_errors=truth_errors,
        q=q,
        r_sifted_hz=n_sifted * scenario.clock_hz / n_pulses,
        leaked_bits=res.leaked_bits if res else 0,
        digest_bits=DIGEST_BITS if res else 0,
        f_measured=res.f_measured if res else math.nan,
        residual_error=res.residual_error if res else False,
        corrections=res.corrections if res else 0,
        final_length=len(b_out["final"]),
        alice_sifted=a_out["sifted"],
        bob_sifted=b_out["sifted"],
        bob_corrected=b_out["corrected"],
        final_alice=a_out["final"],
        final_bob=b_out["final"],
        transcript_digest=transcript,
    )
