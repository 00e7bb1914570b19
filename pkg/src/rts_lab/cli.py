"""Command-line front end.

Machine-readable output (JSON or CSV) goes to stdout only; diagnostics go to
stderr. Exit codes: 0 success, 1 validation error, 2 numeric failure,
3 I/O error. JSON output uses sorted keys so reports diff cleanly.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import NumericError, ValidationError, parse_family, parse_system
from .admap import psi_grid
from .critmeasure import crit_measure, decompose
from .fixedpoint import find_tangency, full_report
from .simulate import (
    estimate_admissible,
    estimate_bounded_tier,
    recursion_growth,
    thread_cap,
    RECURSION_KINDS,
)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _curve_csv(system, samples: int) -> str:
    xs = np.linspace(0.0, 1.0, samples)
    ys = psi_grid(system, xs) - xs
    lines = ["x,psi_minus_x"]
    lines += [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys)]
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    system = parse_system(_read(args.path))
    report = full_report(system, tol=args.tol)
    sys.stdout.write(_dump_json(report))
    return 0


def cmd_curve(args) -> int:
    if args.samples < 2:
        raise ValidationError("--samples must be >= 2")
    text = _read(args.path)
    if args.t is not None:
        system = parse_family(text).system_at(args.t)
    else:
        system = parse_system(text)
    sys.stdout.write(_curve_csv(system, args.samples))
    return 0


def cmd_sweep(args) -> int:
    family = parse_family(_read(args.path))
    try:
        ts = [float(t) for t in args.t_list.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"bad --t-list {args.t_list!r}") from None
    if not ts:
        raise ValidationError("--t-list is empty")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(i_t):
        i, t = i_t
        name = f"curve_{i:03d}.csv"
        (out_dir / name).write_text(
            _curve_csv(family.system_at(t), args.samples), encoding="utf-8")
        return name

    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(ts))) as pool:
        names = list(pool.map(one, enumerate(ts)))
    index = "t,file\n" + "".join(f"{_fmt(t)},{name}\n" for t, name in zip(ts, names))
    (out_dir / "index.csv").write_text(index, encoding="utf-8")
    sys.stdout.write(index)
    return 0


def cmd_crit(args) -> int:
    spec = crit_measure(args.values)
    if args.json:
        sys.stdout.write(_dump_json(spec.to_json()))
        return 0
    rows = [(str(ell), f"{w.numerator}/{w.denominator}")
            for ell, w in sorted(spec.weights.items())]
    width = max(len(r[0]) for r in rows)
    for ell, w in rows:
        sys.stdout.write(f"{ell.rjust(width)}: {w}\n")
    return 0


def cmd_decompose(args) -> int:
    system = parse_system(_read(args.path))
    dec = decompose(system)
    if args.json:
        sys.stdout.write(_dump_json(dec.to_json()))
        return 0
    for coeff, spec in dec.terms:
        seq = ",".join(str(ell) for ell in spec.support_seq)
        sys.stdout.write(f"{coeff.numerator}/{coeff.denominator} * crit({seq})\n")
    return 0


def cmd_simulate(args) -> int:
    system = parse_system(_read(args.path))
    if args.event == "admissible":
        est = estimate_admissible(system, args.depth, args.trials, seed=args.seed,
                                  budget=args.budget)
    elif args.event == "bounded_tier":
        if args.m is None or args.level is None:
            raise ValidationError("bounded_tier needs --m and --level")
        est = estimate_bounded_tier(system, args.m, args.level, args.depth,
                                    args.trials, seed=args.seed, budget=args.budget)
    else:
        raise ValidationError(f"unknown event {args.event!r}")
    sys.stdout.write(_dump_json(est.to_json()))
    return 0


def cmd_growth(args) -> int:
    out = recursion_growth(args.kind, args.depth, args.trials, seed=args.seed, t=args.t)
    lines = ["level,mean,stderr,p50,p90,n"]
    for n, (mean, se) in enumerate(zip(out["means"], out["stderrs"])):
        p50 = out["p50"][n]
        p90 = out["p90"][n]
        lines.append(f"{n},{_fmt(mean)},{_fmt(se)},{_fmt(p50)},{_fmt(p90)},{out['trials']}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_find_critical(args) -> int:
    family = parse_family(_read(args.path))
    t_lo, t_hi = args.t_range
    finding = find_tangency(family, t_lo, t_hi)
    sys.stdout.write(_dump_json(finding.to_json()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rts-lab",
        description="Analyze phase transitions of recursive tree systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="fixed points, criticality, concordance")
    p.add_argument("path")
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("curve", help="CSV of Psi(x) - x on a uniform grid")
    p.add_argument("path")
    p.add_argument("--t", type=float, default=None,
                   help="treat the input as a family document at parameter t")
    p.add_argument("--samples", type=int, default=1001)
    p.set_defaults(fn=cmd_curve)

    p = sub.add_parser("sweep", help="one curve CSV per parameter value")
    p.add_argument("path")
    p.add_argument("--t-list", required=True, help="comma-separated parameter values")
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("crit", help="primitive critical measure weights")
    p.add_argument("values", type=int, nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_crit)

    p = sub.add_parser("decompose", help="convex decomposition into crit measures")
    p.add_argument("path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("simulate", help="Monte Carlo event estimates")
    p.add_argument("path")
    p.add_argument("--event", choices=["admissible", "bounded_tier"], default="admissible")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=10**7)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("growth", help="distributional level-size recursions")
    p.add_argument("kind", choices=list(RECURSION_KINDS))
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_growth)

    p = sub.add_parser("find-critical", help="locate a transition parameter")
    p.add_argument("path")
    p.add_argument("--t-range", type=float, nargs=2, required=True)
    p.set_defaults(fn=cmd_find_critical)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
