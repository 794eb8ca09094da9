"""Command-line interface.

Subcommands: ``run`` executes one experiment from a config file, ``compare``
summarizes baseline vs candidate traces, ``analyze`` tabulates improvement
curves and critical-batch values, ``check`` runs fast invariant suites, and
``plot`` renders a trace as an SVG chart.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including
failed invariant checks).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .analysis import (CbsResult, ImprovementParams, cbs_fraction,
                       cbs_inflection, cbs_max_efficiency, expected_improvement,
                       improvement_table)
from .config import ConfigError, RunConfig
from .geometry import GeometryKind
from .harness import NumericalFailure, RunTrace, compare_runs, run_experiment


def _cmd_run(args) -> int:
    out = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out = os.path.join(args.out, "trace.csv")
    config = RunConfig.from_file(args.config, seed=args.seed, out=out)
    trace = run_experiment(config, out_path=config.out or None, quiet=args.quiet)
    if not args.quiet:
        print(f"finished after {len(trace.rows)} steps; "
              f"final eval loss {trace.final_eval_loss:.6g}")
        if config.out:
            print(f"trace written to {config.out}")
    return 0


def _cmd_compare(args) -> int:
    baselines = [RunTrace.from_csv(p) for p in args.baseline]
    candidates = [RunTrace.from_csv(p) for p in args.candidate]
    summary = compare_runs(baselines, candidates)
    print(summary.table_text())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "comparison.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary.to_csv_text())
        if not args.quiet:
            print(f"per-seed table written to {path}")
    return 0


def _cmd_analyze(args) -> int:
    geometry = GeometryKind.from_name(args.geometry)
    params = ImprovementParams(geometry, args.grad_norm, args.noise_dual,
                               dimension=args.dim)
    gns_value = params.gns
    lo = max(gns_value / 4.0, 1e-12)
    batches = np.geomspace(lo, 100.0 * gns_value, args.points)
    rows = improvement_table(params, batches)
    print(f"geometry {geometry.value}, noise scale {gns_value:.6g}, "
          f"saturated improvement {expected_improvement(params, 1e12):.6g}")
    print("critical batch sizes:")
    for kappa in args.kappa:
        cbs = cbs_fraction(kappa, gns_value, geometry)
        print(f"  fraction-of-max kappa={kappa}: {cbs.value:.6g}")
    for fn, label in ((cbs_inflection, "inflection"),
                      (cbs_max_efficiency, "max-efficiency")):
        try:
            result: CbsResult = fn(gns_value, geometry)
            print(f"  {label}: {result.value:.6g}")
        except ValueError as exc:
            print(f"  {label}: ill-defined ({exc})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"improvement_{geometry.value}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("B,delta_star,delta_per_sample,geometry\n")
            for b, delta, per_sample, name in rows:
                fh.write(f"{b!r},{delta!r},{per_sample!r},{name}\n")
        print(f"improvement table written to {path}")
    return 0


def _cmd_check(args) -> int:
    from . import checks

    failures = checks.run_all(quiet=args.quiet)
    if failures:
        print(f"{failures} invariant check(s) FAILED", file=sys.stderr)
        return 3
    if not args.quiet:
        print("all invariant checks passed")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    trace = RunTrace.from_csv(args.trace)
    steps = trace.column("step")
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    panels = (("eval_loss", "held-out loss"), ("batch_size", "batch size"),
              ("gns_ema", "noise scale (EMA)"))
    for ax, (col, label) in zip(axes, panels):
        ax.plot(steps, trace.column(col))
        ax.set_xlabel("steps")
        ax.set_ylabel(label)
    fig.tight_layout()
    out_dir = args.out or os.path.dirname(os.path.abspath(args.trace))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "trace.svg")
    fig.savefig(path)
    print(f"chart written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnsopt",
        description="adaptive batch-size experiments driven by geometry-matched "
                    "gradient noise scales")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment")
    run.add_argument("--config", required=True, help="flat key=value config file")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--out", default=None, help="directory for the trace CSV")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(fn=_cmd_run)

    comp = sub.add_parser("compare", help="summarize baseline vs candidate traces")
    comp.add_argument("--baseline", nargs="+", required=True)
    comp.add_argument("--candidate", nargs="+", required=True)
    comp.add_argument("--out", default=None)
    comp.add_argument("--quiet", action="store_true")
    comp.set_defaults(fn=_cmd_compare)

    ana = sub.add_parser("analyze", help="improvement curves and critical batches")
    ana.add_argument("--geometry", choices=[k.value for k in GeometryKind],
                     required=True)
    ana.add_argument("--grad-norm", dest="grad_norm", type=float, required=True,
                     help="dual norm of the expected gradient")
    ana.add_argument("--noise-dual", dest="noise_dual", type=float, required=True,
                     help="dual noise level (trace of covariance for l2)")
    ana.add_argument("--dim", type=int, default=1,
                     help="dimension (l1) or rank (nuclear)")
    ana.add_argument("--kappa", type=float, nargs="+",
                     default=[0.1, 0.25, 0.5, 0.9])
    ana.add_argument("--points", type=int, default=25)
    ana.add_argument("--out", default=None)
    ana.set_defaults(fn=_cmd_analyze)

    chk = sub.add_parser("check", help="run fast invariant suites")
    chk.add_argument("--quiet", action="store_true")
    chk.set_defaults(fn=_cmd_check)

    plot = sub.add_parser("plot", help="render a trace CSV as SVG")
    plot.add_argument("--trace", required=True)
    plot.add_argument("--out", default=None)
    plot.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
