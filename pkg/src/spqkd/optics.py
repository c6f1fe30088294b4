"""Loss budget, polarization leakage, SPAD detection and software gating.

Detector ids encode (basis, bit) as ``2*basis + bit`` with basis 0 the
rectilinear pair (H, V) and basis 1 the diagonal pair (D, A).  Polarization
states use the same encoding, so a photon that leaves the correct port of a
matched basis lands on the detector whose id equals Alice's state.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, optimize

from .errors import InfeasibleParameters, IntegrationError
from .source import EmissionTimeModel, sample_emission_time

RECT, DIAG = 0, 1
STATE_NAMES = ("H", "V", "D", "A")
SIGNAL, DARK = 0, 1
ORIGIN_NAMES = ("signal", "dark")


def state_of(bit: int, basis: int) -> int:
    return 2 * basis + bit


@dataclass(frozen=True)
class LinkBudget:
    alice_loss_db: float = 10.6
    extinction_ratio: float = 545.0
    fiber_length_km: float = 0.0
    fiber_atten_db_per_km: float = 2.2
    bob_loss_db: float = 4.76

    def __post_init__(self):
        for name in ("alice_loss_db", "fiber_length_km", "fiber_atten_db_per_km", "bob_loss_db"):
            if getattr(self, name) < 0:
                raise InfeasibleParameters(f"{name} must be >= 0")
        if not self.extinction_ratio > 1:
            raise InfeasibleParameters("extinction_ratio must be > 1")

    @property
    def fiber_loss_db(self) -> float:
        return self.fiber_length_km * self.fiber_atten_db_per_km

    @property
    def total_loss_db(self) -> float:
        return self.alice_loss_db + self.fiber_loss_db + self.bob_loss_db

    @property
    def transmittance(self) -> float:
        return transmittance(self.total_loss_db)


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.40
    dark_rate_hz: float = 300.0
    # placeholder: the QKD-run jitter is not reported
    jitter_sigma_ps: float = 400.0
    dead_time_ns: float = 0.0
    count: int = 4

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise InfeasibleParameters("detector efficiency must lie in [0, 1]")
        if self.dark_rate_hz < 0:
            raise InfeasibleParameters("dark_rate_hz must be >= 0")
        if self.jitter_sigma_ps < 0 or self.dead_time_ns < 0:
            raise InfeasibleParameters("jitter and dead time must be >= 0")
        if self.count != 4:
            raise InfeasibleParameters("BB84 passive receiver needs exactly 4 detectors")


@dataclass(frozen=True)
class GateParams:
    width_ps: float = 300.0
    # None selects the offset that maximises the accepted fraction
    offset_ps: float | None = None

    def __post_init__(self):
        if not self.width_ps > 0:
            raise InfeasibleParameters("gate width_ps must be > 0")


@dataclass(frozen=True)
class ClickRecord:
    clock_index: int
    detector_id: int
    time_offset_ps: float
    in_gate: bool
    # simulation truth; never serialised onto the classical channel
    origin: str = field(default="signal", compare=False)

    @property
    def basis(self) -> int:
        return self.detector_id // 2

    @property
    def bit(self) -> int:
        return self.detector_id % 2


def transmittance(loss_db: float) -> float:
    if loss_db < 0:
        raise InfeasibleParameters(f"loss_db must be >= 0, got {loss_db!r}")
    return 10.0 ** (-loss_db / 10.0)


def polarization_error_prob(extinction_ratio: float) -> float:
    """Chance a photon in the right basis leaves the wrong PBS port."""
    if not extinction_ratio > 1:
        raise InfeasibleParameters("extinction_ratio must be > 1")
    if math.isinf(extinction_ratio):
        return 0.0
    return 1.0 / (1.0 + extinction_ratio)


def _wrong_port_prob(budget: LinkBudget, misalignment: float) -> float:
    return min(1.0, polarization_error_prob(budget.extinction_ratio) + misalignment)


def propagate_pulse(n_photons: int, alice_state: int, budget: LinkBudget, bob_basis: int,
                    rng: np.random.Generator, misalignment: float = 0.0,
                    coupling: float = 1.0) -> list[int]:
    """Detector ids reached by the photons of one pulse (one entry per photon)."""
    survive = coupling * budget.transmittance
    e = _wrong_port_prob(budget, misalignment)
    a_basis, a_bit = divmod(alice_state, 2)
    out = []
    for _ in range(n_photons):
        if rng.random() >= survive:
            continue
        if bob_basis == a_basis:
            bit = a_bit ^ int(rng.random() < e)
        else:
            bit = int(rng.random() < 0.5)
        out.append(state_of(bit, bob_basis))
    return out


def _breakpoints(model: EmissionTimeModel, a: float, b: float):
    s = model.jitter_sigma_ps
    pts = {0.0}
    for tau in (model.primary_lifetime_ps, model.tail_lifetime_ps):
        pts.update(tau * m for m in (0.5, 1, 3, 10, 30, 100))
    for m in (-6, -3, -1, 1, 3, 6):
        pts.add(m * s)
    return sorted(p for p in pts if a < p < b)


def _integrate(model: EmissionTimeModel, a: float, b: float) -> float:
    edges = [a, *_breakpoints(model, a, b), b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        out = integrate.quad(model.pdf, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200, full_output=1)
        if len(out) == 4:
            raise IntegrationError(f"quad did not converge on [{lo}, {hi}]: {out[3]}")
        total += out[0]
    return total


@lru_cache(maxsize=256)
def optimal_gate_offset(model: EmissionTimeModel, width_ps: float) -> float:
    """Gate start (ps) that maximises the accepted fraction."""
    if model.jitter_sigma_ps == 0:
        # density is zero before 0 and decreasing after
        return 0.0
    s = model.jitter_sigma_ps
    res = optimize.minimize_scalar(
        lambda o: -(model.cdf(o + width_ps) - model.cdf(o)),
        bounds=(-6 * s - width_ps, model.primary_lifetime_ps + 6 * s),
        method="bounded",
        options={"xatol": 1e-6},
    )
    return float(res.x)


def resolve_gate(gate: GateParams, model: EmissionTimeModel) -> GateParams:
    if gate.offset_ps is not None:
        return gate
    return GateParams(gate.width_ps, optimal_gate_offset(model, gate.width_ps))


def gate_accept_fraction(model: EmissionTimeModel, gate: GateParams) -> float:
    """Probability an emitted, detected photon falls inside the gate."""
    gate = resolve_gate(gate, model)
    lo = gate.offset_ps
    hi = lo + gate.width_ps
    if model.jitter_sigma_ps == 0:
        lo = max(lo, 0.0)
        if hi <= lo:
            return 0.0
    val = _integrate(model, lo, hi)
    return min(1.0, max(0.0, val))


def clock_period_ps(clock_hz: float) -> float:
    return 1e12 / clock_hz


def dark_window_start(gate: GateParams, clock_hz: float) -> float:
    # one clock period, centred on the gate
    return gate.offset_ps + gate.width_ps / 2 - clock_period_ps(clock_hz) / 2


def in_gate(t_ps, gate: GateParams):
    return (t_ps >= gate.offset_ps) & (t_ps <= gate.offset_ps + gate.width_ps)


def detect(arrivals, det: DetectorParams, time_model: EmissionTimeModel, gate: GateParams,
           clock_index: int, rng: np.random.Generator, clock_hz: float = 40e6) -> list[ClickRecord]:
    """Click records of one pulse: photon clicks plus independent dark clicks.

    Several events on one detector within the pulse collapse to the earliest.
    """
    gate = resolve_gate(gate, time_model)
    events = {}
    for d in arrivals:
        if rng.random() < det.efficiency:
            t = sample_emission_time(time_model, rng)
            if d not in events or t < events[d][0]:
                events[d] = (t, "signal")
    p_dark = det.dark_rate_hz / clock_hz
    t0 = dark_window_start(gate, clock_hz)
    period = clock_period_ps(clock_hz)
    for d in range(det.count):
        if rng.random() < p_dark:
            t = t0 + rng.random() * period
            if d not in events or t < events[d][0]:
                events[d] = (t, "dark")
    return [
        ClickRecord(clock_index, d, t, bool(in_gate(t, gate)), origin)
        for d, (t, origin) in sorted(events.items())
    ]


@dataclass
class ClickTable:
    """Columnar click records, sorted by (clock_index, detector_id)."""

    clock_index: np.ndarray
    detector_id: np.ndarray
    time_ps: np.ndarray
    in_gate: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return len(self.clock_index)

    def records(self) -> list[ClickRecord]:
        return [
            ClickRecord(int(c), int(d), float(t), bool(g), ORIGIN_NAMES[o])
            for c, d, t, g, o in zip(self.clock_index, self.detector_id, self.time_ps,
                                     self.in_gate, self.origin)
        ]

    def gated(self) -> "ClickTable":
        m = self.in_gate
        return ClickTable(self.clock_index[m], self.detector_id[m], self.time_ps[m],
                          self.in_gate[m], self.origin[m])


def _bernoulli_indices(rng: np.random.Generator, p: float, n: int) -> np.ndarray:
    """Sorted indices in [0, n) of successes of n Bernoulli(p) trials."""
    if p <= 0 or n == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    out = []
    pos = -1
    chunk = max(16, int(n * p * 1.2) + 16)
    while True:
        gaps = rng.geometric(p, chunk)
        idx = pos + np.cumsum(gaps)
        keep = idx[idx < n]
        out.append(keep)
        if len(keep) < chunk:
            break
        pos = int(idx[-1])
    return np.concatenate(out).astype(np.int64)


def simulate_clicks(n_photons: np.ndarray, alice_state: np.ndarray, bob_basis: np.ndarray,
                    budget: LinkBudget, det: DetectorParams, time_model: EmissionTimeModel,
                    gate: GateParams, clock_hz: float, streams, misalignment: float = 0.0,
                    coupling: float = 1.0) -> ClickTable:
    """Vectorised pulse train through channel, receiver and detectors.

    ``streams`` maps stream names ("channel", "detector-k", "dark-k") to
    generators.  Statistically identical to calling :func:`propagate_pulse`
    then :func:`detect` pulse by pulse.
    """
    gate = resolve_gate(gate, time_model)
    n_pulses = len(n_photons)
    rng = streams["channel"]
    survivors = rng.binomial(n_photons, coupling * budget.transmittance)
    pulse_idx = np.repeat(np.arange(n_pulses, dtype=np.int64), survivors)
    a_state = alice_state[pulse_idx]
    b_basis = bob_basis[pulse_idx]
    a_basis, a_bit = np.divmod(a_state, 2)
    e = _wrong_port_prob(budget, misalignment)
    u = rng.random(len(pulse_idx))
    matched = a_basis == b_basis
    out_bit = np.where(matched, a_bit ^ (u < e), u < 0.5).astype(np.int64)
    det_id = 2 * b_basis.astype(np.int64) + out_bit

    cols = [[], [], [], []]  # clock, detector, time, origin
    for d in range(det.count):
        r = streams[f"detector-{d}"]
        sel = pulse_idx[det_id == d]
        hit = sel[r.random(len(sel)) < det.efficiency]
        t = sample_emission_time(time_model, r, len(hit))
        cols[0].append(hit)
        cols[1].append(np.full(len(hit), d, dtype=np.int64))
        cols[2].append(t)
        cols[3].append(np.full(len(hit), SIGNAL, dtype=np.int8))

        rd = streams[f"dark-{d}"]
        dark = _bernoulli_indices(rd, det.dark_rate_hz / clock_hz, n_pulses)
        td = dark_window_start(gate, clock_hz) + rd.random(len(dark)) * clock_period_ps(clock_hz)
        cols[0].append(dark)
        cols[1].append(np.full(len(dark), d, dtype=np.int64))
        cols[2].append(td)
        cols[3].append(np.full(len(dark), DARK, dtype=np.int8))

    clock = np.concatenate(cols[0])
    dets = np.concatenate(cols[1])
    times = np.concatenate(cols[2]).astype(float)
    origin = np.concatenate(cols[3])

    # earliest event per (pulse, detector)
    order = np.lexsort((times, dets, clock))
    clock, dets, times, origin = clock[order], dets[order], times[order], origin[order]
    first = np.ones(len(clock), dtype=bool)
    first[1:] = (clock[1:] != clock[:-1]) | (dets[1:] != dets[:-1])
    clock, dets, times, origin = clock[first], dets[first], times[first], origin[first]

    if det.dead_time_ns > 0 and len(clock):
        keep = _apply_dead_time(clock, dets, times, det.dead_time_ns * 1e3, clock_period_ps(clock_hz))
        clock, dets, times, origin = clock[keep], dets[keep], times[keep], origin[keep]

    return ClickTable(clock, dets, times, in_gate(times, gate), origin)


def _apply_dead_time(clock, dets, times, dead_ps, period_ps):
    absolute = clock * period_ps + times
    keep = np.ones(len(clock), dtype=bool)
    for d in np.unique(dets):
        idx = np.flatnonzero(dets == d)
        idx = idx[np.argsort(absolute[idx], kind="stable")]
        last = -np.inf
        for i in idx:
            if absolute[i] - last < dead_ps:
                keep[i] = False
            else:
                last = absolute[i]
    return keep
