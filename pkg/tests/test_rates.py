import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from spqkd import rates
from spqkd.errors import NoRootInBracket
from spqkd.optics import DetectorParams, LinkBudget
from spqkd.scenario import BUNDLED, Scenario, load_bundled
from spqkd.source import SourceParams

mpmath.mp.dps = 30


def h2_oracle(q):
    q = mpmath.mpf(q)
    return float(-q * mpmath.log(q, 2) - (1 - q) * mpmath.log(1 - q, 2))


# values from an arbitrary-precision evaluation of the same expressions
CASCADE_FACTOR_0621 = 0.61055860944601223
GLLP_FACTOR_0621 = 0.21732421790753006
ZERO_DELTA_ROOT = 0.08837859072494229


def test_binary_entropy():
    assert rates.binary_entropy(0.5) == 1.0
    assert rates.binary_entropy(0.0) == 0.0 and rates.binary_entropy(1.0) == 0.0
    for q in (0.001, 0.0621, 0.11, 0.3):
        assert rates.binary_entropy(q) == pytest.approx(h2_oracle(q), rel=1e-14)
    with pytest.raises(ValueError):
        rates.binary_entropy(1.5)


def test_factor_golden_values():
    assert rates.cascade_factor(0.0621, 1.16) == pytest.approx(CASCADE_FACTOR_0621, rel=1e-12)
    assert rates.gllp_factor(0.0621, 0.00425, 1.16) == pytest.approx(GLLP_FACTOR_0621, rel=1e-12)
    assert rates.multiphoton_fraction(0.1, 0.85) == pytest.approx(4.25e-3, rel=1e-12)


def test_zero_delta_root():
    root = mpmath.findroot(lambda q: 1 - 2 * mpmath.mpf("1.16") * (-q * mpmath.log(q, 2) - (1 - q) * mpmath.log(1 - q, 2)), 0.09)
    assert float(root) == pytest.approx(ZERO_DELTA_ROOT, abs=1e-15)
    assert rates.gllp_factor(ZERO_DELTA_ROOT, 0.0, 1.16) == pytest.approx(0.0, abs=1e-12)


def test_rate_clamping():
    assert rates.cascade_net_rate(0.3, 100.0) == 0.0
    assert rates.gllp_net_rate(0.3, 100.0, 0.01) == 0.0
    assert rates.gllp_net_rate(0.05, 100.0, 1.0) == 0.0
    assert rates.gllp_factor(0.6, 0.5) == -math.inf
    assert rates.cascade_net_rate(0.0, 100.0) == 100.0


@given(q=st.floats(0.0, 0.2), r=st.floats(0.0, 1e6))
def test_gllp_never_exceeds_cascade(q, r):
    assert rates.gllp_net_rate(q, r, 0.0) <= rates.cascade_net_rate(q, r) + 1e-9


def test_gllp_monotone_grid():
    qs = np.linspace(0.0, 0.12, 61)
    ds = np.linspace(0.0, 0.2, 41)
    grid = np.array([[rates.gllp_net_rate(q, 1000.0, d) for d in ds] for q in qs])
    assert np.all(np.diff(grid, axis=0) <= 1e-9)
    assert np.all(np.diff(grid, axis=1) <= 1e-9)


def simple(**kw):
    src = SourceParams(40e6, kw.pop("rate", 4e6), 0.85, 0.11, 464.0, 0.0, 300.0)
    return Scenario("t", src, kw.pop("link", LinkBudget()), kw.pop("det", DetectorParams(jitter_sigma_ps=0.0)), **kw)


def test_analytic_qber_noiseless_limits():
    s = simple(link=LinkBudget(0, math.inf, 0, 2.2, 0), det=DetectorParams(dark_rate_hz=0.0, jitter_sigma_ps=0.0))
    assert rates.analytic_qber(s) == 0.0
    dark_only = simple(rate=0.0)
    assert rates.analytic_qber(dark_only) == 0.5


def test_analytic_sifted_rate_hand_value():
    s = simple(det=DetectorParams(dark_rate_hz=0.0, jitter_sigma_ps=0.0))
    t = 0.11 * 10 ** (-(10.6 + 4.76) / 10)
    accept = 1 - math.exp(-300 / 464)
    assert rates.analytic_sifted_rate(s) == pytest.approx(40e6 * 0.5 * 0.1 * t * 0.4 * accept, rel=1e-9)


@pytest.mark.parametrize("name", BUNDLED)
def test_secure_flag_matches_gllp_sign(name):
    s = load_bundled(name)
    rep = rates.analyze(s)
    sign = rates.gllp_factor(rep.q, rep.delta, s.analysis.f_p) > 0
    assert rep.secure == (sign and rep.q < s.analysis.qber_threshold)


def test_qber_monotone_in_flux_sweep():
    s = load_bundled("paper-0km-5uW")
    reps = rates.sweep(s, "source.emission_rate_hz", np.geomspace(2e5, 4e6, 12))
    qs = [r.q for r in reps]
    assert all(b < a for a, b in zip(qs, qs[1:]))


def test_alice_plane_delta_is_smaller():
    s = load_bundled("paper-0km-5uW")
    assert rates.delta_for(s, "alice") < rates.delta_for(s, "source")
    with pytest.raises(ValueError):
        rates.delta_for(s, "moon")


def test_equivalent_flux_closed_form():
    ref = load_bundled("paper-2km-1uW")
    cand = load_bundled("strauf-82MHz-10.6dB")
    km = rates.max_distance(cand, "equivalent-flux", ref)
    f0 = 31e6 * 0.11 * 10 ** (-(10.6 + 4.76) / 10)
    fr = 480e3 * 0.11 * 10 ** (-(10.6 + 4.4 + 4.76) / 10)
    assert km == pytest.approx(10 * math.log10(f0 / fr) / 2.2, rel=1e-12)
    loose = rates.max_distance(cand, "equivalent-flux", ref, same_coupling=False)
    assert loose == pytest.approx(km + 10 * math.log10(1 / 0.11) / 2.2, rel=1e-12)
    with pytest.raises(ValueError):
        rates.max_distance(cand, "equivalent-flux")


def test_qber_threshold_distance_is_crossing():
    s = load_bundled("strauf-82MHz-10.6dB")
    d = rates.max_distance(s, "qber-threshold")
    q = rates.analytic_qber(s.with_value("channel.length_km", d))
    assert q == pytest.approx(0.11, abs=1e-9)
    assert rates.analytic_qber(s.with_value("channel.length_km", d * 0.999)) < 0.11


def test_gllp_zero_distance():
    s = load_bundled("strauf-82MHz-3dB")
    d = rates.max_distance(s, "gllp-zero")
    at = s.with_value("channel.length_km", d)
    assert rates.gllp_factor(rates.analytic_qber(at), rates.delta_for(at), 1.16) == pytest.approx(0.0, abs=1e-8)


def test_no_root_in_bracket():
    s = load_bundled("paper-2km-1uW").with_value("channel.length_km", 0.0)
    with pytest.raises(NoRootInBracket):
        rates.max_distance(s.with_value("analysis.qber_threshold", 0.49), "qber-threshold", max_km=1.0)


def test_fit_misalignment_exact():
    s = load_bundled("paper-0km-5uW")
    e = rates.fit_misalignment(s, 0.03)
    assert rates.analytic_qber(s.with_value("bob.misalignment_error_prob", e)) == pytest.approx(0.03, rel=1e-12)
