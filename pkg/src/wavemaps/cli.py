"""Command-line entry point ``wavemaps``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .bubbles import proximity, proximity_min, single_bubble_fit
from .config import load_config
from .exceptions import WaveMapsError
from .grid import check_class
from .io import read_snapshot
from .runner import analyze, parse_grid_spec, run, sweep


def _cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except WaveMapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.emit_plotdata:
        cfg.emit_plotdata = True
    out = args.output or cfg.output_dir()
    status = run(cfg, out)
    print(f"{'ok' if status == 0 else 'failed'}: {out}")
    return status


def _cmd_analyze(args) -> int:
    status = analyze(args.run_dir)
    print(f"{'ok' if status == 0 else 'failed'}: {args.run_dir}")
    return status


def _cmd_fit(args) -> int:
    try:
        state = read_snapshot(args.snapshot)
    except WaveMapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if (state.ell, state.m) == (0, 1):
        f = single_bubble_fit(state.grid, state.psi)
        out = {"kind": "single", "lambda": f.lam, "distance": f.distance,
               "low_confidence": f.low_confidence}
    elif (state.ell, state.m) == (0, 0):
        f = proximity(state, args.sign) if args.sign else proximity_min(state)[0]
        out = {"kind": "two_bubble", "sign": f.sign, "lambda": f.lam, "mu": f.mu,
               "residual_sq": f.residual_sq, "separation": f.separation,
               "d_value": f.d_value, "converged": f.converged}
    else:
        print(f"error: no fit defined for class ({state.ell}, {state.m})", file=sys.stderr)
        return 1
    print(json.dumps(out, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    try:
        grid = parse_grid_spec(args.grid)
        return sweep(args.template, grid, jobs=args.jobs, output_dir=args.output)
    except WaveMapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _cmd_validate(args) -> int:
    try:
        state = read_snapshot(args.snapshot)
    except WaveMapsError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    problems = check_class(state)
    print(f"valid: N={state.grid.N} k={state.k} class=({state.ell}, {state.m}) t={state.time!r}")
    for p in problems:
        print(f"warning: {p}")
    return 0


def _sign(text):
    value = int(text)
    if value not in (-1, 1):
        raise argparse.ArgumentTypeError("sign must be +1 or -1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavemaps", description=__doc__)
    p.add_argument("--version", action="version", version=f"wavemaps {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("config")
    s.add_argument("--output", "-o", default=None, help="run directory (overrides config)")
    s.add_argument("--emit-plotdata", action="store_true", help="write downsampled long CSVs")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("analyze", help="recompute diagnostics of a stored run")
    s.add_argument("run_dir")
    s.set_defaults(func=_cmd_analyze)

    s = sub.add_parser("fit", help="fit bubbles to a snapshot file")
    s.add_argument("snapshot")
    s.add_argument("--sign", type=_sign, default=None)
    s.set_defaults(func=_cmd_fit)

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("template")
    s.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="dotted config key and its values; repeat for a product grid")
    s.add_argument("-j", "--jobs", type=int, default=1)
    s.add_argument("--output", "-o", default=None)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("validate", help="check a snapshot file")
    s.add_argument("snapshot")
    s.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
