import math

import numpy as np

from spqkd import rates
from spqkd.protocol.session import OK, QBER_ABORT, TOO_SHORT, pa_length, run_session
from spqkd.scenario import load_bundled, parse_scenario

NOISELESS = """\
label = noiseless
clock_hz = 40e6
source.emission_rate_hz = 4e6
source.g2 = 0.85
source.coupling_efficiency = 1
channel.length_km = 0
alice.loss_db = 0
alice.extinction_ratio = inf
bob.loss_db = 0
detector.dark_rate_hz = 0
"""


def test_noiseless_chain():
    r = run_session(parse_scenario(NOISELESS), 10_000, seed=1)
    assert r.status == OK and r.q == 0.0 and r.n_sifted > 16
    assert np.array_equal(r.alice_sifted, r.bob_sifted)
    assert np.array_equal(r.final_alice, r.final_bob)


def test_same_seed_same_report_across_transports():
    s = load_bundled("strauf-82MHz-3dB")
    a = run_session(s, 2_000_000, "inproc", seed=4)
    b = run_session(s, 2_000_000, "inproc", seed=4)
    c = run_session(s, 2_000_000, "stream", seed=4)
    assert a.fingerprint() == b.fingerprint() == c.fingerprint()
    assert a.transcript_digest == c.transcript_digest
    assert run_session(s, 2_000_000, "inproc", seed=5).fingerprint() != a.fingerprint()


def test_keys_agree_after_reconciliation():
    s = load_bundled("strauf-82MHz-3dB")
    r = run_session(s, 4_000_000, seed=2)
    assert r.status == OK and not r.residual_error
    assert np.array_equal(r.bob_corrected, r.alice_sifted)
    assert r.final_length > 0 and np.array_equal(r.final_alice, r.final_bob)
    assert r.n_errors == int(np.count_nonzero(r.alice_sifted != r.bob_sifted))


def test_short_and_noisy_sessions_skip_reconciliation():
    r = run_session(load_bundled("paper-0km-0.25uW"), 1000, seed=0)
    assert r.status == TOO_SHORT and r.leaked_bits == 0 and r.final_length == 0
    noisy = parse_scenario(NOISELESS + "bob.misalignment_error_prob = 0.3\n")
    r = run_session(noisy, 20_000, seed=0)
    assert r.status == QBER_ABORT and r.final_length == 0


def test_pa_length_rule():
    assert pa_length(0.0, 0.0, 1.16, 1000, 100) == 836
    assert pa_length(0.02, 0.004, 1.16, 1000, 200) == math.floor(rates.gllp_factor(0.02, 0.004, 1.16) * 1000) - 64
    # capped by what reconciliation left undisclosed
    assert pa_length(0.02, 0.004, 1.16, 1000, 400) == 1000 - 400 - 64
    assert pa_length(0.2, 0.01, 1.16, 1000, 100) == 0
    assert pa_length(0.0, 0.0, 1.16, 1000, 950) == 0


def test_monte_carlo_matches_analytic_at_high_count():
    s = parse_scenario(NOISELESS.replace("alice.extinction_ratio = inf", "alice.extinction_ratio = 545")
                       .replace("detector.dark_rate_hz = 0", "detector.dark_rate_hz = 3e5")
                       + "bob.misalignment_error_prob = 0.02\n")
    n = 1_000_000
    r = run_session(s, n, seed=3)
    mean_sifted = rates.analytic_sifted_rate(s) * n / s.clock_hz
    assert abs(r.n_sifted - mean_sifted) <= 3 * math.sqrt(mean_sifted) + 1
    q = rates.analytic_qber(s)
    assert abs(r.q - q) <= 3 * math.sqrt(q * (1 - q) / r.n_sifted)
