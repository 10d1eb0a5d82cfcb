"""Command-line front end.

State descriptors have the form `name:key=value,...` with angles in
radians, for example `noon:N=4,theta=0.7854`, `relphase:N=100,p=0`,
`binomial:N=10,theta=0.3927,chi=0`, `cohmix:alpha2=2,nmax=40`,
`separable:structure=Case2,seed=7,nmax=6,pairs=2`, `case3:N=100,pairs=2`,
`fock:occ=2/3`, `vacuum:modes=2` and `verstraete`.

Tables are written as CSV with 17 significant digits per float. The
thread count of grid scans and the witness battery is capped by the
BOSEWITNESS_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import interferometer as itf
from .fock import dumps_state, loads_state
from .parallel import thread_count
from .states import DescriptorError, TruncationError, make_state, relative_phase_angle
from .witness import (
    BatteryConfig,
    excluded_interval,
    hup_boundary,
    reports_to_csv,
    reports_to_json,
    run_battery,
    verdict_summary,
)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None):
    if path and path != "-":
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def load_state(source: str):
    """A state from a JSON file path or from a descriptor."""
    p = Path(source)
    if p.suffix == ".json" and p.exists():
        return loads_state(p.read_text())
    return make_state(source)


def grid(start: float, stop: float, points: int) -> np.ndarray:
    if points < 1:
        raise ValueError("a grid needs at least one point")
    return np.linspace(start, stop, points)


# ---------------------------------------------------------------- commands

def cmd_state_make(args) -> int:
    st = make_state(args.descriptor)
    _emit(dumps_state(st) + "\n", args.output)
    info = sys.stderr if not args.output or args.output == "-" else sys.stdout
    n_mean = sum(n * w for n, w in st.sector_weights().items())
    print(f"mean_N {fmt(float(n_mean))}", file=info)
    print(f"sectors {' '.join(str(s) for s in st.basis.sectors)}", file=info)
    print(f"global_ssr {fmt(bool(st.ssr_flags.get('global_compliant')))}", file=info)
    if "tail_mass" in st.meta:
        print(f"tail_mass {fmt(float(st.meta['tail_mass']))}", file=info)
    return 0


def _battery_config(args) -> BatteryConfig:
    orders = tuple(int(x) for x in args.orders.split(",")) if args.orders else (1, 2)
    return BatteryConfig(structure=args.structure, rtol=args.rtol, theta=args.theta, orders=orders,
                         include_qualitative=args.qualitative)


def cmd_witness_run(args) -> int:
    st = load_state(args.state)
    reports = run_battery(st, _battery_config(args), threads=thread_count())
    summary = verdict_summary(reports)
    if args.json:
        _emit(reports_to_json(reports) + "\n", args.json)
    if args.csv:
        _emit(reports_to_csv(reports), args.csv)
    for k, v in summary.items():
        print(f"{k} {v}")
    if args.expect:
        golden = json.loads(Path(args.expect).read_text())
        bad = {k: (v, summary.get(k, "missing")) for k, v in golden.items() if summary.get(k) != v}
        for k, (want, got) in bad.items():
            print(f"MISMATCH {k}: expected {want}, got {got}", file=sys.stderr)
        return 1 if bad else 0
    return 0


def fringe_rows(state, phis, theta, r, seed):
    return itf.fringe_scan(state, phis, theta=theta, r=r, seed=seed, threads=thread_count())


def cmd_scan_fringe(args) -> int:
    st = load_state(args.state)
    rows = fringe_rows(st, grid(args.phi_start, args.phi_stop, args.points), args.theta, args.samples, args.seed)
    _emit(rows_to_csv(itf.FRINGE_COLUMNS, rows), args.output)
    return 0


HUP_COLUMNS = ("sz", "lower", "upper", "excluded")


def hup_rows(j: float, xi: float, points: int):
    return hup_boundary(j, xi, grid(0.0, j, points))


def cmd_scan_hup(args) -> int:
    if args.J <= 0 or args.xi < 1:
        raise ValueError("need J > 0 and xi >= 1")
    _emit(rows_to_csv(HUP_COLUMNS, hup_rows(args.J, args.xi, args.points)), args.output)
    ex = excluded_interval(args.J, args.xi)
    if ex is not None:
        print(f"excluded |Sz| in [{fmt(ex[0])}, {fmt(ex[1])}]", file=sys.stderr)
    return 0


def _read_sequence(text: str):
    p = Path(text)
    return itf.parse_sequence(p.read_text() if p.exists() else text)


def cmd_sample(args) -> int:
    st = load_state(args.state)
    rec = itf.sample_measurements(st, _read_sequence(args.sequence), args.R, args.seed)
    doc = rec.to_dict()
    if not args.keep_samples:
        doc.pop("samples")
    _emit(json.dumps(doc, indent=1) + "\n", args.output)
    return 0


# ---------------------------------------------------------------- reproduction bundles

def _hup_bundle(j, xi, points=201):
    def run():
        return rows_to_csv(HUP_COLUMNS, hup_rows(j, xi, points))
    return run


def _relphase_fringe(n=1000, points=201):
    """Mean and variance versus phase for the relative-phase state; the mean
    crosses zero at the state's phase angle."""
    def run():
        tp = relative_phase_angle(n, 0)
        phis = grid(tp - 0.5, tp + 0.5, points)
        return rows_to_csv(itf.FRINGE_COLUMNS, fringe_rows(make_state(f"relphase:N={n},p=0"), phis,
                                                            math.pi / 2, 0, 0))
    return run


def _ramsey_fringe(n=20, chi_t=0.02, points=61):
    """Ramsey fringe for all bosons starting in the first mode."""
    def run():
        st = make_state(f"fock:occ={n}/0")
        rows = []
        for phi in grid(0.0, 2 * math.pi, points):
            out = itf.ramsey(st, 1.0, chi_t, float(phi))
            rows.append((float(phi), out["mean"], out["variance"], out["squeezing_parameter"]))
        return rows_to_csv(("phi", "mean", "variance", "squeezing_parameter"), rows)
    return run


def _witness_table():
    """Verdicts of the headline tests on the reference states."""
    def run():
        cases = ["relphase:N=1000,p=0", "cohmix:alpha2=2,nmax=40", "verstraete", "noon:N=4,theta=0.7853981633974483",
                 "binomial:N=10,theta=0.39269908169872414,chi=0", "case3:N=100,pairs=2"]
        ids = ["spin_squeezing", "hillery", "weak_correlation", "strong_correlation", "sorensen", "corr_coeff",
               "two_mode_squeeze"]
        rows = []
        for desc in cases:
            summ = verdict_summary(run_battery(make_state(desc), threads=thread_count()))
            rows.append([desc] + [summ.get(i, "absent") for i in ids])
        return rows_to_csv(["state"] + ids, rows)
    return run


REPRODUCIBLES = {
    "hup-j1000-xi1": _hup_bundle(1000, 1.0),
    "hup-j1000-xi10": _hup_bundle(1000, 10.0),
    "hup-j1-xi10": _hup_bundle(1, 10.0),
    "relphase-fringe": _relphase_fringe(),
    "ramsey-fringe": _ramsey_fringe(),
    "witness-table": _witness_table(),
}


def cmd_reproduce(args) -> int:
    if args.id not in REPRODUCIBLES:
        raise ValueError(f"unknown id {args.id!r}; known: {', '.join(sorted(REPRODUCIBLES))}")
    _emit(REPRODUCIBLES[args.id](), args.output)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosewitness", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="group", required=True)

    st = sub.add_parser("state", help="build states").add_subparsers(dest="cmd", required=True)
    p = st.add_parser("make", help="write a state as JSON")
    p.add_argument("descriptor")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_state_make)

    wt = sub.add_parser("witness", help="entanglement tests").add_subparsers(dest="cmd", required=True)
    p = wt.add_parser("run", help="run the test battery")
    p.add_argument("state", help="state JSON file or descriptor")
    p.add_argument("--json")
    p.add_argument("--csv")
    p.add_argument("--expect", help="JSON file mapping test ids to expected verdicts")
    p.add_argument("--structure", choices=["TwoMode", "Case1", "Case2", "Case3"])
    p.add_argument("--rtol", type=float, default=1e-9)
    p.add_argument("--theta", type=float, default=0.0, help="quadrature angle")
    p.add_argument("--orders", help="comma-separated correlation orders")
    p.add_argument("--qualitative", action="store_true", help="include the number-difference test")
    p.set_defaults(func=cmd_witness_run)

    sc = sub.add_parser("scan", help="parameter scans").add_subparsers(dest="cmd", required=True)
    p = sc.add_parser("fringe", help="interferometer output versus pulse phase")
    p.add_argument("state")
    p.add_argument("--theta", type=float, default=math.pi / 2)
    p.add_argument("--phi-start", type=float, default=0.0)
    p.add_argument("--phi-stop", type=float, default=2 * math.pi)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--samples", type=int, default=0, help="repetitions per point (0: predictions only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_scan_fringe)
    p = sc.add_parser("hup-region", help="allowed Var(Sx) band versus |<Sz>|")
    p.add_argument("--J", type=float, required=True)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_scan_hup)

    p = sub.add_parser("sample", help="simulate projective measurements")
    p.add_argument("state")
    p.add_argument("--sequence", required=True, help="JSON file or inline JSON list")
    p.add_argument("-R", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-samples", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reproduce", help="emit reference data tables")
    p.add_argument("id", help=", ".join(sorted(REPRODUCIBLES)))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DescriptorError, TruncationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
