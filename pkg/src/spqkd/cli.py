"""Command-line drivers.  CSV goes to stdout, diagnostics to stderr.

Failures exit with status 2 and a single JSON object on stderr::

    {"error": "<kind>", "message": "..."}
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import math
import sys

import numpy as np

from . import rates
from .errors import SpqkdError
from .protocol.cascade import cascade_reconcile
from .protocol.session import run_session
from .protocol.wire import INPROC, TRANSPORTS
from .scenario import KEYS, resolve
from .seeding import substream
from .source import estimate_g2, pn_distribution, simulate_hbt

COLUMNS = ["label", "param_value", "mu", "q_analytic", "q_mc", "r_sifted_hz",
           "r_net_cascade_hz", "delta", "r_secure_gllp_hz", "secure"]
SESSION_COLUMNS = ["n_pulses", "seed", "status", "n_sifted", "n_errors", "leaked_bits",
                   "f_measured", "final_length", "transcript_digest"]


class UsageError(SpqkdError):
    kind = "usage-error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(value) -> str:
    """Shortest round-trip text for numbers; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _row(scenario, rep, q_analytic, param_value=None, q_mc=None):
    return [scenario.label, param_value, scenario.mu, q_analytic, q_mc, rep.r_sifted_hz,
            rep.r_net_cascade_hz, rep.delta, rep.r_secure_gllp_hz, rep.secure]


def _write(out, header, rows):
    w = _writer(out)
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


def _log(msg):
    print(msg, file=sys.stderr)


# -- commands ---------------------------------------------------------------

def cmd_analyze(args, out):
    s = resolve(args.scenario)
    rep = rates.analyze(s, args.plane)
    _write(out, COLUMNS, [_row(s, rep, rep.q)])


def _simulate_row(s, pulses, seed, transport, plane, param_value=None):
    sess = run_session(s, pulses, transport, seed)
    q_mc = sess.q if sess.n_sifted else None
    rep = rates.report(sess.q if sess.n_sifted else 0.0, sess.r_sifted_hz, s, plane)
    return _row(s, rep, rates.analytic_qber(s), param_value, q_mc), sess


def cmd_simulate(args, out):
    s = resolve(args.scenario)
    seed = s.seed if args.seed is None else args.seed
    row, sess = _simulate_row(s, args.pulses, seed, args.transport, args.plane)
    _log(f"{s.label}: {sess.n_sifted} sifted bits, status {sess.status}, transport {args.transport}")
    _write(out, COLUMNS + SESSION_COLUMNS, [row + [
        sess.n_pulses, sess.seed, sess.status, sess.n_sifted, sess.n_errors, sess.leaked_bits,
        None if math.isnan(sess.f_measured) else sess.f_measured, sess.final_length,
        sess.transcript_digest,
    ]])


def _sweep_point(job):
    s, param, value, mc, seed, transport, plane = job
    point = s.with_value(param, value)
    if mc:
        return _simulate_row(point, mc, seed, transport, plane, value)[0]
    rep = rates.analyze(point, plane)
    return _row(point, rep, rep.q, value)


def sweep_grid(start, stop, steps, log=False):
    if steps < 1:
        raise UsageError("--steps must be >= 1")
    if steps == 1:
        return [float(start)]
    if log:
        if start <= 0 or stop <= 0:
            raise UsageError("--log needs positive bounds")
        return [float(v) for v in np.geomspace(start, stop, steps)]
    return [float(v) for v in np.linspace(start, stop, steps)]


def cmd_sweep(args, out):
    s = resolve(args.scenario)
    if args.param not in KEYS or KEYS[args.param][2] is not float:
        raise UsageError(f"--param must be a numeric scenario key, got {args.param!r}")
    seed = s.seed if args.seed is None else args.seed
    jobs = [(s, args.param, v, args.mc, seed, args.transport, args.plane)
            for v in sweep_grid(args.start, args.stop, args.steps, args.log)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_point, jobs))  # map keeps grid order
    else:
        rows = [_sweep_point(j) for j in jobs]
    _write(out, COLUMNS, rows)


def cmd_max_distance(args, out):
    s = resolve(args.scenario)
    ref = resolve(args.reference) if args.reference else None
    km = rates.max_distance(s, args.method, ref, same_coupling=not args.no_same_coupling,
                            max_km=args.max_km, plane=args.plane)
    _write(out, ["label", "method", "reference", "same_coupling", "max_distance_km"],
           [[s.label, args.method, ref.label if ref else None,
             None if args.method != rates.EQUIVALENT_FLUX else not args.no_same_coupling, km]])


def cascade_bench(n, q, trials, seed, transport=INPROC):
    """Summary row of ``trials`` CASCADE runs on random keys with i.i.d. errors at rate ``q``."""
    rng = substream(seed, f"bench-{q!r}")
    fs, leaks, ok, ledger_ok = [], [], 0, True
    for t in range(trials):
        a = rng.integers(0, 2, n, dtype=np.uint8)
        err = (rng.random(n) < q).astype(np.uint8)
        q_est = float(err.mean()) or 1.0 / n
        r = cascade_reconcile(a, a ^ err, q_est, seed=int(rng.integers(0, 1 << 63)), transport=transport)
        ok += int(np.array_equal(r.corrected_key, a))
        ledger_ok &= r.leaked_bits == r.transcript_parity_bits
        fs.append(r.f_measured)
        leaks.append(r.leaked_bits)
    return [q, n, trials, ok / trials, float(np.mean(fs)), float(np.std(fs)), float(np.mean(leaks)), ledger_ok]


def cmd_cascade_bench(args, out):
    rows = [cascade_bench(args.n, q, args.trials, args.seed, args.transport) for q in args.q]
    _write(out, ["q", "n", "trials", "success_fraction", "mean_f_measured", "std_f_measured",
                 "mean_leaked_bits", "ledger_matches_transcript"], rows)


def cmd_hbt(args, out):
    if args.scenario:
        s = resolve(args.scenario)
        mu, g2 = s.mu, s.source.g2
    else:
        mu, g2 = args.mu, args.g2
    rng = substream(args.seed, "source")
    if args.poisson:
        a, b = simulate_hbt(args.pulses, rng, poisson_mu=mu, efficiency=args.efficiency)
        g2 = 1.0
    else:
        a, b = simulate_hbt(args.pulses, rng, pn_distribution(mu, g2), efficiency=args.efficiency)
    est = estimate_g2(a, b, args.max_lag)
    _write(out, ["mu", "g2_model", "g2_estimate", "stderr", "zero_lag", "side_mean", "n_pulses"],
           [[mu, g2, est.g2, est.stderr, est.zero_lag, est.side_mean, args.pulses]])


# -- parser -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="spqkd", description="BB84 link simulator and key-rate engine for sub-Poissonian sources.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def scenario_cmd(name, help_):
        c = sub.add_parser(name, help=help_)
        c.add_argument("scenario", help="scenario file or bundled scenario name")
        c.add_argument("--plane", choices=(rates.SOURCE_PLANE, rates.ALICE_PLANE), default=rates.SOURCE_PLANE,
                       help="where mu is taken for the multi-photon fraction")
        return c

    scenario_cmd("analyze", "closed-form QBER and rates")

    c = scenario_cmd("simulate", "Monte Carlo session with CASCADE and hashing")
    c.add_argument("--pulses", type=int, default=10_000_000)
    c.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    c.add_argument("--transport", choices=TRANSPORTS, default=INPROC)

    c = scenario_cmd("sweep", "sweep one scenario parameter")
    c.add_argument("--param", required=True, help="dotted scenario key, e.g. source.emission_rate_hz")
    c.add_argument("--from", dest="start", type=float, required=True)
    c.add_argument("--to", dest="stop", type=float, required=True)
    c.add_argument("--steps", type=int, default=11)
    c.add_argument("--log", action="store_true", help="geometric grid")
    c.add_argument("--mc", type=int, default=0, metavar="PULSES", help="add Monte Carlo QBER with this many pulses")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--transport", choices=TRANSPORTS, default=INPROC)
    c.add_argument("--jobs", type=int, default=1)

    c = scenario_cmd("max-distance", "longest usable fibre length")
    c.add_argument("--method", choices=rates.METHODS, default=rates.EQUIVALENT_FLUX)
    c.add_argument("--reference", help="reference operating point for equivalent-flux")
    c.add_argument("--no-same-coupling", action="store_true",
                   help="treat the emission rate as already coupled into fibre")
    c.add_argument("--max-km", type=float, default=500.0)

    c = sub.add_parser("cascade-bench", help="CASCADE success rate and efficiency on random keys")
    c.add_argument("--n", type=int, default=10_000)
    c.add_argument("--q", type=float, nargs="+", default=[0.02, 0.05, 0.10])
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--transport", choices=TRANSPORTS, default=INPROC)

    c = sub.add_parser("hbt", help="pulsed HBT g2(0) estimate on simulated clicks")
    c.add_argument("--scenario", help="take mu and g2 from this scenario")
    c.add_argument("--mu", type=float, default=0.1)
    c.add_argument("--g2", type=float, default=0.4)
    c.add_argument("--poisson", action="store_true", help="coherent light instead of the source model")
    c.add_argument("--pulses", type=int, default=10_000_000)
    c.add_argument("--efficiency", type=float, default=0.4)
    c.add_argument("--max-lag", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    return p


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "max-distance": cmd_max_distance,
    "cascade-bench": cmd_cascade_bench,
    "hbt": cmd_hbt,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.cmd](args, out)
    except (SpqkdError, ValueError, OSError) as exc:
        kind = getattr(exc, "kind", "io-error" if isinstance(exc, OSError) else "invalid-value")
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
