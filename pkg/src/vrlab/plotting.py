"""Vector line charts of recorded metrics: per-method mean with a std band."""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .harness import RunResult  # noqa: E402
from .metrics import moving_average  # noqa: E402

__all__ = ["emit_plots", "PANELS"]

# (record field, y-axis label, log-scale preferred)
PANELS = (
    ("test_loss", "test loss", False),
    ("avg_sq_grad_norm", "mean per-sample squared grad norm", True),
    ("full_sq_grad_norm", "squared norm of mean gradient", True),
    ("loss_gap", "loss gap (test - train)", False),
    ("acc_gap", "accuracy gap (train - test)", False),
)

plt.rcParams["svg.hashsalt"] = "vrlab"  # deterministic SVG ids


def _series_matrix(runs, field: str, smooth_window: int):
    """Per-seed smoothed series, nan-padded to the longest epoch axis."""
    epochs = sorted({rec.epoch for run in runs for rec in run.records})
    pos = {e: i for i, e in enumerate(epochs)}
    mat = np.full((len(runs), len(epochs)), np.nan)
    for i, run in enumerate(runs):
        if not run.records:
            continue
        vals = moving_average([getattr(r, field) for r in run.records], smooth_window)
        for rec, v in zip(run.records, vals):
            mat[i, pos[rec.epoch]] = v
    return np.asarray(epochs), mat


def emit_plots(result: RunResult, out_dir, smooth_window: int = 5) -> list[Path]:
    """One SVG per metric panel; seed curves are smoothed with a trailing
    moving average before the across-seed mean and std band are taken."""
    if smooth_window < 1:
        raise ValueError("smooth_window must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_method: dict[str, list] = {}
    for run in result.runs:
        by_method.setdefault(run.method_name, []).append(run)

    written = []
    for field, label, want_log in PANELS:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        positive = True
        for name in sorted(by_method):
            epochs, mat = _series_matrix(by_method[name], field, smooth_window)
            if epochs.size == 0 or not np.any(np.isfinite(mat)):
                continue  # e.g. accuracy panels for non-classifier families
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                mean = np.nanmean(mat, axis=0)
                std = np.nanstd(mat, axis=0)
            (line,) = ax.plot(epochs, mean, label=name, linewidth=1.6)
            if mat.shape[0] > 1:
                ax.fill_between(epochs, mean - std, mean + std,
                                color=line.get_color(), alpha=0.18, linewidth=0)
            finite = mean[np.isfinite(mean)]
            if finite.size and finite.min() <= 0:
                positive = False
        if want_log and positive:
            ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(frameon=False, fontsize=9)
        ax.grid(alpha=0.25, linewidth=0.5)
        fig.tight_layout()
        path = out / f"{field}.svg"
        # drop the creation timestamp so reruns are byte-identical
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
