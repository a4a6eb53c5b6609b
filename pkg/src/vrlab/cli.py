"""Command-line entry point: run experiments, plot results, self-check."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .data import CsvFormatError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrlab",
        description="Variance-reduced optimizer experiments with "
                    "generalization metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every method/seed arm of a config")
    p_run.add_argument("config", help="path to an experiment config file")
    p_run.add_argument("--out", help="output directory (overrides the config)")
    p_run.add_argument("--seed", type=int,
                       help="rebase the repeat seeds at this value")
    p_run.add_argument("--threads", type=int, default=1,
                       help="arms to run concurrently (results are identical)")

    p_plot = sub.add_parser("plot", help="render SVG charts from a results directory")
    p_plot.add_argument("results_dir")
    p_plot.add_argument("--window", type=int, default=5,
                        help="trailing smoothing window (epochs)")

    sub.add_parser("check", help="run the built-in oracle/property checks")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "check":
        from .selfcheck import run_selfcheck
        return 0 if run_selfcheck() else 1

    if args.command == "plot":
        from .harness import load_results
        from .plotting import emit_plots
        try:
            result = load_results(args.results_dir)
            if args.window < 1:
                raise ValueError("--window must be >= 1")
            written = emit_plots(result, args.results_dir, smooth_window=args.window)
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for path in written:
            print(path)
        return 0

    # run
    from .harness import run_experiment, write_results
    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = parse_config(args.config, overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        result = run_experiment(cfg, threads=args.threads)
    except (ConfigError, CsvFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = write_results(result, cfg.out_dir)
    for s in result.summaries:
        print(f"{s.method_name}: best {s.best:.6g} mean {s.mean:.6g} "
              f"std {s.std:.6g} grad_evals {s.total_grad_evals}")
    print(f"results written to {out}")

    dead_methods = []
    for m in cfg.methods:
        arm = [r for r in result.runs if r.method_name == m.name]
        if arm and all(r.diverged for r in arm):
            dead_methods.append(m.name)
    if dead_methods:
        print(f"error: all seeds diverged for: {', '.join(dead_methods)}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
