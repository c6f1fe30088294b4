"""Closed-form QBER, sifted-rate and net key-rate engine.

Rates are per second.  Every rate is clamped at zero; a report is flagged
secure only when the privacy-amplified rate is positive and the QBER sits
below the abort threshold.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import optimize

from .errors import InfeasibleParameters, NoRootInBracket
from .optics import gate_accept_fraction, polarization_error_prob, resolve_gate
from .scenario import Scenario
from .source import pn_distribution

SOURCE_PLANE = "source"
ALICE_PLANE = "alice"


@dataclass(frozen=True)
class RateReport:
    q: float
    r_sifted_hz: float
    r_net_cascade_hz: float
    delta: float
    r_secure_gllp_hz: float
    secure: bool


def binary_entropy(q: float) -> float:
    """Shannon entropy of a biased coin, in bits."""
    if not 0 <= q <= 1:
        raise ValueError(f"binary_entropy needs q in [0, 1], got {q!r}")
    if q == 0 or q == 1:
        return 0.0
    return -q * math.log2(q) - (1 - q) * math.log2(1 - q)


def cascade_factor(q: float, f_p: float = 1.16) -> float:
    """Unclamped net-rate fraction after error correction alone."""
    return 1 - f_p * binary_entropy(q)


def cascade_net_rate(q: float, r_sifted_hz: float, f_p: float = 1.16) -> float:
    return max(0.0, cascade_factor(q, f_p)) * r_sifted_hz


def multiphoton_fraction(mu: float, g2: float) -> float:
    """Multi-photon probability per pulse; a PNS attacker takes all of them."""
    return pn_distribution(mu, g2).p2


def gllp_factor(q: float, delta: float, f_p: float = 1.16) -> float:
    """Unclamped secure fraction of the sifted key (-inf when undefined)."""
    if delta >= 1:
        return -math.inf
    q1 = q / (1 - delta)
    if q1 > 1:
        return -math.inf
    return (1 - delta) - f_p * binary_entropy(q) - (1 - delta) * f_p * binary_entropy(q1)


def gllp_net_rate(q: float, r_sifted_hz: float, delta: float, f_p: float = 1.16) -> float:
    if delta >= 1 or q / (1 - delta) > 0.5:
        return 0.0
    return max(0.0, gllp_factor(q, delta, f_p)) * r_sifted_hz


# -- scenario-level model ---------------------------------------------------

@dataclass(frozen=True)
class _Occupancy:
    signal: float  # in-gate signal clicks per pulse, all detectors
    dark: float    # in-gate dark clicks per pulse, all detectors
    error_prob: float


def _occupancy(scenario: Scenario) -> _Occupancy:
    model = scenario.time_model()
    gate = resolve_gate(scenario.gate, model)
    accept = gate_accept_fraction(model, gate)
    det = scenario.detector
    signal = scenario.mu * scenario.transmittance * det.efficiency * accept
    dark = det.count * det.dark_rate_hz * gate.width_ps * 1e-12
    e = min(1.0, polarization_error_prob(scenario.link.extinction_ratio) + scenario.misalignment_error_prob)
    return _Occupancy(signal, dark, e)


def analytic_qber(scenario: Scenario) -> float:
    occ = _occupancy(scenario)
    total = occ.signal + occ.dark
    if total == 0:
        return 0.0
    if occ.signal == 0:
        return 0.5
    return (occ.error_prob * occ.signal + 0.5 * occ.dark) / total


def analytic_sifted_rate(scenario: Scenario) -> float:
    occ = _occupancy(scenario)
    return scenario.clock_hz * 0.5 * (occ.signal + occ.dark)


def delta_for(scenario: Scenario, plane: str = SOURCE_PLANE) -> float:
    """Multi-photon fraction with mu taken at the collection cone or Alice's output."""
    mu = scenario.mu
    if plane == ALICE_PLANE:
        mu *= scenario.source.coupling_efficiency * 10 ** (-scenario.link.alice_loss_db / 10)
    elif plane != SOURCE_PLANE:
        raise ValueError(f"unknown plane {plane!r}")
    return multiphoton_fraction(mu, scenario.source.g2)


def report(q: float, r_sifted_hz: float, scenario: Scenario, plane: str = SOURCE_PLANE) -> RateReport:
    a = scenario.analysis
    delta = delta_for(scenario, plane)
    r_net = cascade_net_rate(q, r_sifted_hz, a.f_p)
    r_sec = gllp_net_rate(q, r_sifted_hz, delta, a.f_p)
    return RateReport(q, r_sifted_hz, r_net, delta, r_sec, r_sec > 0 and q < a.qber_threshold)


def analyze(scenario: Scenario, plane: str = SOURCE_PLANE) -> RateReport:
    return report(analytic_qber(scenario), analytic_sifted_rate(scenario), scenario, plane)


def sweep(scenario: Scenario, path: str, grid, plane: str = SOURCE_PLANE) -> list[RateReport]:
    return [analyze(scenario.with_value(path, float(v)), plane) for v in grid]


# -- distance solvers -------------------------------------------------------

EQUIVALENT_FLUX = "equivalent-flux"
QBER_THRESHOLD = "qber-threshold"
GLLP_ZERO = "gllp-zero"
METHODS = (EQUIVALENT_FLUX, QBER_THRESHOLD, GLLP_ZERO)


def bob_photon_flux(scenario: Scenario) -> float:
    """Photons per second reaching Bob's detectors (before detection and gating)."""
    return scenario.source.emission_rate_hz * scenario.transmittance


def _at_distance(scenario: Scenario, km: float) -> Scenario:
    return scenario.with_value("channel.length_km", km)


def _bisect(fn, lo, hi, what):
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo
    if np.sign(flo) == np.sign(fhi):
        raise NoRootInBracket(f"{what}: no sign change on [{lo}, {hi}] km")
    return optimize.bisect(fn, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)


def max_distance(scenario: Scenario, method: str = EQUIVALENT_FLUX, reference: Scenario | None = None,
                 same_coupling: bool = True, max_km: float = 500.0, plane: str = SOURCE_PLANE) -> float:
    """Longest fibre length (km) keeping the link usable under ``method``.

    ``equivalent-flux`` returns the length at which the photon flux reaching
    Bob falls to that of ``reference`` at the reference's own length.  With
    ``same_coupling`` False the scenario's emission rate is taken as already
    collected into fibre (coupling efficiency 1).
    """
    if method == EQUIVALENT_FLUX:
        if reference is None:
            raise ValueError("equivalent-flux needs a reference operating point")
        cand = scenario if same_coupling else scenario.with_value("source.coupling_efficiency", 1.0)
        f0 = bob_photon_flux(_at_distance(cand, 0.0))
        f_ref = bob_photon_flux(reference)
        if f0 <= 0 or f_ref <= 0:
            raise NoRootInBracket("equivalent-flux: zero photon flux")
        km = 10 * math.log10(f0 / f_ref) / scenario.link.fiber_atten_db_per_km
        if km < 0:
            raise NoRootInBracket("equivalent-flux: source is dimmer than the reference at 0 km")
        return km
    if method == QBER_THRESHOLD:
        thr = scenario.analysis.qber_threshold
        return _bisect(lambda d: analytic_qber(_at_distance(scenario, d)) - thr, 0.0, max_km, method)
    if method == GLLP_ZERO:
        f_p = scenario.analysis.f_p

        def secure_fraction(d):
            s = _at_distance(scenario, d)
            return gllp_factor(analytic_qber(s), delta_for(s, plane), f_p)

        return _bisect(secure_fraction, 0.0, max_km, method)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


# -- calibration ------------------------------------------------------------

def fit_misalignment(scenario: Scenario, target_q: float) -> float:
    """Misalignment probability at which the analytic QBER equals ``target_q``.

    The QBER is affine in the wrong-port probability, so this is exact.
    """
    occ = _occupancy(scenario)
    if occ.signal <= 0:
        raise InfeasibleParameters("no signal clicks; misalignment has no effect")
    e = (target_q * (occ.signal + occ.dark) - 0.5 * occ.dark) / occ.signal
    return e - polarization_error_prob(scenario.link.extinction_ratio)
