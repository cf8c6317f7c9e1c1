"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .errors import ConfigError, DomainError
from .fragment import LevelMap, fragmentation_curve
from .harness.calibrate import CalibrationSet, calibrate
from .harness.config import load_config
from .harness.report import emit_report
from .harness.suites import SUITES, run_suite
from .mechanism import BranchingMechanism
from .odelaw import solve_w
from .rng import stream
from .treesim import PlaneTree, analyze, offspring_table, sample_tree_conditioned


def _cmd_calibrate(args) -> int:
    config = load_config(args.config)
    calib = calibrate(config)
    calib.save(args.out)
    print(f"c_N={calib.c_N:.6g} c_H={calib.c_H:.6g} c_L={calib.c_L:.6g} -> {args.out}")
    return 0


def _cmd_suite(args) -> int:
    config = load_config(args.config)
    calib = CalibrationSet.load(args.calib) if args.calib else None
    status = 0
    for suite_id in args.ids:
        report = run_suite(suite_id, config, calib)
        out = args.out if len(args.ids) == 1 else _suffixed(args.out, suite_id)
        summary = config["output.summary_csv"] or None
        if summary and len(args.ids) > 1:
            summary = _suffixed(summary, suite_id)
        emit_report(report, out, summary)
        for rec in report.records:
            print(f"{'PASS' if rec.passed else 'FAIL'} {rec.suite}/{rec.case}: "
                  f"{rec.estimate:.6g} (se {rec.stderr:.2g}) target {rec.target:.6g}")
        if not report.passed:
            status = 1
    return status


def _suffixed(path, suite_id):
    stem, dot, ext = str(path).rpartition(".")
    return f"{stem}-{suite_id}.{ext}" if dot else f"{path}-{suite_id}"


def _cmd_ode(args) -> int:
    mech = BranchingMechanism.stable(args.alpha)
    sol = solve_w(mech, args.lam, args.gamma, args.tmax, args.step)
    with open(args.out, "w") as fh:
        sol.write_csv(fh)
    return 0


def _cmd_fragment(args) -> int:
    config = load_config(args.config)
    with open(args.tree_dump, "rb") as fh:
        tree = PlaneTree.from_bytes(fh.read())
    c_H = CalibrationSet.load(args.calib).c_H if args.calib else 1.0
    level_map = LevelMap(config.alpha, config.n0, c_H)
    stats = analyze(tree)
    t_grid = [level_map.level_of(d) for d in range(stats.height + 1)]
    curve = fragmentation_curve(stats, level_map, t_grid)
    with open(args.out, "w") as fh:
        curve.write_csv(fh)
    return 0


def _cmd_dump(args) -> int:
    config = load_config(args.config)
    law = offspring_table(config.alpha)
    rng = stream(config.seed, "conditioned", args.index)
    tree = sample_tree_conditioned(law, config.n0, config["conditioned.window"], rng,
                                   config["conditioned.max_attempts"])
    with open(args.out, "wb") as fh:
        fh.write(tree.to_bytes())
    print(f"tree {args.index}: {tree.total_progeny} vertices -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyfrag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit the discrete-to-continuum constants")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="calibration JSON")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("suite", help="run verification suites")
    p.add_argument("ids", nargs="+", metavar="id", help=f"one or more of: {', '.join(SUITES)}")
    p.add_argument("--config", required=True)
    p.add_argument("--calib", help="calibration JSON (needed by tree-side suites)")
    p.add_argument("--out", required=True, help="JSON-lines report")
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("ode", help="solve the fragment-law ODE and write (t, w) CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ode)

    p = sub.add_parser("fragment", help="ranked fragment masses of a dumped tree, one row per level")
    p.add_argument("--config", required=True)
    p.add_argument("--tree-dump", required=True, help="binary parent-array dump")
    p.add_argument("--calib", help="calibration JSON for the level scale (default c_H = 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fragment)

    p = sub.add_parser("dump", help="write a size-conditioned tree as a binary parent array")
    p.add_argument("--config", required=True)
    p.add_argument("--index", type=int, default=0, help="tree index within the conditioned stream")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        parser.exit(2, f"levyfrag: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
