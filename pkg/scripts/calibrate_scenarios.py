"""Regenerate the bundled scenario files from the published operating points.

Fits are deterministic: the misalignment probability is solved exactly from
the target QBER, and the slow-tail weight is fitted where the basic model
cannot otherwise reach the measured or projected values.  Run from the repo
root; files are written to src/spqkd/scenarios/.
"""

from dataclasses import replace
import math
from pathlib import Path

from scipy import optimize

from spqkd import rates
from spqkd.optics import LinkBudget
from spqkd.scenario import Scenario, parse_scenario, serialize_scenario
from spqkd.source import SourceParams

OUT = Path(__file__).resolve().parents[1] / "src" / "spqkd" / "scenarios"


def base(label, rate, g2, km, tau=464.0, tf=0.05, clock=40e6, alice_db=10.6, mis=0.0):
    return Scenario(
        label,
        SourceParams(clock, rate, g2, 0.11, tau, tf, 300.0),
        LinkBudget(alice_db, 545.0, float(km), 2.2, 4.76),
        misalignment_error_prob=mis,
    )


def fitted(s, q):
    return replace(s, misalignment_error_prob=rates.fit_misalignment(s, q))


def strauf_objective(tf):
    a = rates.analyze(base("a", 31e6, 0.4, 2, tf=tf, clock=82e6, alice_db=10.6))
    b = rates.analyze(base("b", 31e6, 0.4, 2, tf=tf, clock=82e6, alice_db=3.0))
    if a.r_secure_gllp_hz <= 0 or b.r_secure_gllp_hz <= 0:
        return math.inf
    return (((a.q - 0.0108) / 0.005) ** 2 + ((b.q - 0.0068) / 0.005) ** 2
            + (math.log(a.r_secure_gllp_hz / 288) / math.log(2)) ** 2
            + (math.log(b.r_secure_gllp_hz / 1712) / math.log(2)) ** 2)


def build():
    hi0 = fitted(base("paper-0km-5uW", 4e6, 0.85, 0, tau=563.0), 0.0122)
    hi2 = fitted(base("paper-2km-5uW", 4e6, 0.85, 2, tau=563.0), 0.0621)
    e0, e2 = hi0.misalignment_error_prob, hi2.misalignment_error_prob

    # lowest flux: same 0 km optics as the 5 uW point, so the tail weight absorbs the excess QBER
    def excess(tf):
        return rates.fit_misalignment(base("x", 200e3, 0.32, 0, tf=tf), 0.219) - e0
    tf_lo = round(float(optimize.brentq(excess, 0.05, 0.95, xtol=1e-12)), 3)
    lo0 = fitted(base("paper-0km-0.25uW", 200e3, 0.32, 0, tf=tf_lo), 0.219)

    mid0 = base("paper-0km-1uW", 480e3, 0.39, 0, mis=e0)
    mid2 = base("paper-2km-1uW", 480e3, 0.39, 2, mis=e2)

    tf_st = round(float(optimize.minimize_scalar(strauf_objective, bounds=(0.0, 0.95), method="bounded",
                                           options={"xatol": 1e-10}).x), 3)
    st10 = base("strauf-82MHz-10.6dB", 31e6, 0.4, 2, tf=tf_st, clock=82e6, alice_db=10.6)
    st3 = base("strauf-82MHz-3dB", 31e6, 0.4, 2, tf=tf_st, clock=82e6, alice_db=3.0)

    notes = {
        hi0.label: [
            "5 uW pump point at 0 km: 4 MHz into the collection cone, g2(0) = 0.85,",
            "primary lifetime 563 ps.  Measured QBER 1.22 %.",
            "bob.misalignment_error_prob is fitted so the analytic QBER equals 1.22 %.",
        ],
        hi2.label: [
            "5 uW pump point through 2 km of fibre.  Measured QBER 6.21 %.",
            "bob.misalignment_error_prob is fitted so the analytic QBER equals 6.21 %;",
            "the excess over 0 km stands in for unmodelled polarisation drift in the fibre.",
        ],
        lo0.label: [
            "0.25 uW pump point at 0 km: 200 kHz into the collection cone, g2(0) = 0.32.",
            "Measured QBER 21.9 %.  With the default 5 % slow tail the fitted misalignment",
            "would exceed 0.10, so the slow-tail weight is chosen instead so the fitted",
            "misalignment equals the 0 km value of the 5 uW point (same optics),",
            "then rounded to three decimals and the misalignment refitted exactly.",
        ],
        mid0.label: [
            "1 uW pump point at 0 km: 480 kHz into the collection cone, g2(0) = 0.39.",
            "No QBER was reported here; misalignment is carried over from the 0 km 5 uW fit.",
        ],
        mid2.label: [
            "1 uW pump point through 2 km of fibre; this is the reference operating point",
            "for the equivalent-flux distance estimate.  Misalignment carried over from",
            "the 2 km 5 uW fit.",
        ],
        st10.label: [
            "Projected revised test-bed: a 31 MHz source clocked at 82 MHz, g2(0) = 0.4,",
            "2 km of fibre, 10.6 dB transmitter loss.  Projected QBER 1.08 %, secure",
            "rate 288 bit/s.  The projection came from an idealised simulation, so",
            "misalignment is 0; the slow-tail weight is a joint fit to both projected",
            "QBERs and secure rates, rounded to three decimals.",
        ],
        st3.label: [
            "Projected revised test-bed with the transmitter loss cut to 3 dB.",
            "Projected QBER 0.68 %, secure rate 1712 bit/s.  Same tail-weight fit as the",
            "10.6 dB variant.",
        ],
    }
    for s in (lo0, mid0, hi0, mid2, hi2, st10, st3):
        r = rates.analyze(s)
        header = notes[s.label] + [
            "",
            f"analytic QBER {r.q!r}, sifted rate {r.r_sifted_hz!r} Hz,",
            f"secure rate {r.r_secure_gllp_hz!r} Hz.",
            "Generated by scripts/calibrate_scenarios.py.",
        ]
        text = serialize_scenario(s, "\n".join(header))
        assert parse_scenario(text) == s
        (OUT / f"{s.label}.scenario").write_text(text, encoding="utf-8")
        print(f"{s.label}: q={r.q:.5f} mis={s.misalignment_error_prob:.6f} tf={s.source.tail_fraction}")


if __name__ == "__main__":
    build()
