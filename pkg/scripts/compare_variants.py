"""Run a method-comparison config and report endpoint flatness per arm.

For every method this prints the mean final test accuracy, the smoothed
final mean per-sample squared gradient norm (lower = flatter endpoint), and
the per-seed gradient-evaluation budget, then writes the per-run CSVs and
SVG charts.
"""

import argparse

import numpy as np

from vrlab import moving_average, parse_config, run_experiment, write_results
from vrlab.plotting import emit_plots


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/blobs_mlp.cfg")
    parser.add_argument("--out", help="override the config's output directory")
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--window", type=int, default=5,
                        help="trailing smoothing window (epochs)")
    args = parser.parse_args()

    cfg = parse_config(args.config, {"out": args.out} if args.out else None)
    result = run_experiment(cfg, threads=args.threads)

    print(f"{'method':<14} {'final test acc':>14} {'final E||g_i||^2':>17} {'grad evals':>11}")
    for m in cfg.methods:
        arm = [r for r in result.runs if r.method_name == m.name and not r.diverged]
        if not arm:
            print(f"{m.name:<14} {'(all seeds diverged)':>14}")
            continue
        acc = np.mean([r.records[-1].test_acc for r in arm])
        norm = np.mean([
            moving_average([rec.avg_sq_grad_norm for rec in r.records], args.window)[-1]
            for r in arm])
        print(f"{m.name:<14} {acc:>14.4f} {norm:>17.6g} {arm[0].total_grad_evals:>11}")

    out = write_results(result, cfg.out_dir)
    for path in emit_plots(result, out, smooth_window=args.window):
        print(path)


if __name__ == "__main__":
    main()
