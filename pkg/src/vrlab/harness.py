"""Experiment runner: seeded multi-method, multi-repeat training runs.

Seeding layout: the dataset is built once from the dataset seed; each
(method, repeat-seed) arm derives two PCG64 streams from the repeat seed via
SeedSequence spawning, one for parameter init and one for batch sampling.
The same repeat seed therefore gives every method the same initial point,
and arms are independent of each other and of execution order, so results
do not depend on --threads.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .config import ConfigError, ExperimentConfig, MethodSpec
from .data import Dataset, SplitSpec, sample_outer_batch, split_dataset, standardize
from .models import LogisticRegression, MeanQuadratic, Model, TwoLayerMLP
from .optim import (SGD_METHODS, SIGN_OF_METHOD, SVRG_METHODS, Schedule,
                    init_state, lr_at_epoch, modified_sgd_outer_iteration,
                    sgd_step, svrg_outer_iteration)

__all__ = [
    "RunRecord",
    "MethodSummary",
    "RunResult",
    "budget_matched_epochs",
    "run_experiment",
    "write_results",
    "load_results",
]


@dataclass
class RunRecord:
    method_name: str
    method: str
    seed: int
    records: list
    diverged: bool
    total_grad_evals: int


@dataclass(frozen=True)
class MethodSummary:
    method_name: str
    best: float
    mean: float
    std: float
    total_grad_evals: int


@dataclass
class RunResult:
    config: ExperimentConfig | None
    runs: list
    summaries: list


def budget_matched_epochs(base_epochs: int, method: str) -> int:
    """SVRG-family methods keep the base count; sgd-family methods run
    round(1.5 * base) epochs (half-up) to match gradient budgets."""
    if base_epochs < 1:
        raise ValueError("base_epochs must be >= 1")
    if method in SVRG_METHODS or method == "modified_sgd":
        return base_epochs
    if method in SGD_METHODS:
        return int(math.floor(1.5 * base_epochs + 0.5))
    raise ValueError(f"unknown method {method!r}")


def build_task(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Model]:
    """Materialize (train, test, model) from the config's dataset/model specs.

    When the split leaves no test samples the train set doubles as the test
    set (gaps are then identically 0).
    """
    ds = cfg.dataset
    quad_model = None
    if ds.kind == "blobs":
        full = data_mod.gen_blobs(ds.n, ds.dim, classes=ds.classes,
                                  separation=ds.separation, seed=ds.seed)
    elif ds.kind == "quadratic":
        curvature = ds.curvature[0] if len(ds.curvature) == 1 else np.asarray(ds.curvature)
        full, quad_model = data_mod.gen_quadratic_family(
            ds.n, ds.dim, curvature, center_spread=ds.center_spread, seed=ds.seed)
    else:
        label = ds.label_column
        try:
            label = int(label)
        except ValueError:
            pass
        full = data_mod.load_csv(ds.path, label_column=label, normalize=False)

    train, test = split_dataset(full, SplitSpec(ds.train_fraction, seed=ds.seed))
    if ds.kind == "csv" and ds.normalize:
        if test is None:
            (train,) = standardize(train)
        else:
            train, test = standardize(train, test)
    if test is None:
        test = Dataset(train.x, train.y, role="test")

    ms = cfg.model
    if ms.kind == "quadratic":
        model = quad_model
    else:
        classes = int(max(train.y.max(), test.y.max())) + 1
        if classes < 2:
            raise ConfigError("classification needs at least two label values")
        if ms.kind == "logistic":
            model = LogisticRegression(train.input_dim, classes, l2=ms.l2)
        else:
            model = TwoLayerMLP(train.input_dim, hidden=ms.hidden, classes=classes,
                                activation=ms.activation, l2=ms.l2)
    return train, test, model


def _arm_model(cfg: ExperimentConfig, base: Model, method: MethodSpec) -> Model:
    """Per-arm model copy so a weight_decay override does not leak."""
    if method.weight_decay is None or method.weight_decay == base.l2:
        return base
    if isinstance(base, MeanQuadratic):
        raise ConfigError(f"method {method.name!r}: the quadratic family has no weight decay")
    if isinstance(base, LogisticRegression):
        return LogisticRegression(base.input_dim, base.classes, l2=method.weight_decay)
    return TwoLayerMLP(base.input_dim, hidden=base.hidden, classes=base.classes,
                       activation=base.activation, l2=method.weight_decay)


def _epoch_iterations(method: str, n_train: int, outer: int, inner: int) -> int:
    """Outer iterations (or sgd steps) per epoch: inner updates touch about
    n_train samples."""
    if method in SGD_METHODS:
        return math.ceil(n_train / inner)
    covered = inner * (outer // inner)
    return math.ceil(n_train / covered)


def _metric_subset(cfg: ExperimentConfig, train: Dataset, seed: int) -> Dataset:
    k = cfg.metric_subsample
    if not k or k >= len(train):
        return train
    # fixed per-run subset: dedicated stream, drawn once
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5D1]))
    idx = rng.choice(len(train), size=k, replace=False)
    return train.subset(idx)


def _record(model: Model, w, train: Dataset, test: Dataset, grad_train: Dataset,
            epoch: int, lr: float, grad_evals: int) -> metrics_mod.MetricRecord:
    loss_gap, acc_gap = metrics_mod.gap_metrics(model, w, train, test)
    return metrics_mod.MetricRecord(
        epoch=epoch,
        lr=lr,
        grad_evals=grad_evals,
        train_loss=model.data_loss(w, train.x, train.y),
        test_loss=model.data_loss(w, test.x, test.y),
        train_acc=model.accuracy(w, train.x, train.y),
        test_acc=model.accuracy(w, test.x, test.y),
        avg_sq_grad_norm=metrics_mod.avg_sq_grad_norm(model, w, grad_train),
        full_sq_grad_norm=metrics_mod.full_sq_grad_norm(model, w, grad_train),
        loss_gap=loss_gap,
        acc_gap=acc_gap,
    )


def run_single(cfg: ExperimentConfig, method: MethodSpec, seed: int,
               train: Dataset, test: Dataset, model: Model) -> RunRecord:
    """One (method, seed) training arm."""
    model = _arm_model(cfg, model, method)
    init_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    w0 = model.init_params(np.random.default_rng(init_ss))
    rng = np.random.default_rng(sample_ss)

    epochs = budget_matched_epochs(cfg.epochs, method.method) if cfg.budget_match else cfg.epochs
    schedule = Schedule(method.lr, epochs, method.milestones, method.decay_factor)
    outer = method.resolved_outer()
    inner = method.inner_batch
    if outer > len(train):
        raise ConfigError(f"method {method.name!r}: outer batch {outer} exceeds "
                          f"the training-set size {len(train)}")
    iterations = _epoch_iterations(method.method, len(train), outer, inner)
    grad_train = _metric_subset(cfg, train, seed)

    state = init_state(method.method, w0)
    records: list = []
    diverged = False
    for epoch in range(epochs):
        lr = lr_at_epoch(schedule, epoch)
        for _ in range(iterations):
            if method.method in SVRG_METHODS:
                plan = sample_outer_batch(train, outer, inner, rng)
                svrg_outer_iteration(state, model, train, plan, lr,
                                     SIGN_OF_METHOD[method.method],
                                     caching=cfg.caching)
            elif method.method == "modified_sgd":
                plan = sample_outer_batch(train, outer, inner, rng)
                modified_sgd_outer_iteration(state, model, train, plan, lr)
            else:
                plan = sample_outer_batch(train, inner, inner, rng)
                sgd_step(state, model, train.x[plan.indices], train.y[plan.indices],
                         lr, momentum=method.momentum,
                         nesterov=method.method == "nag")
        state.epoch = epoch + 1
        if not np.all(np.isfinite(state.w)):
            diverged = True
            break
        if (epoch + 1) % cfg.cadence == 0 or epoch + 1 == epochs:
            # metric arithmetic may overflow on a diverging trajectory; the
            # finiteness check below is the real detector
            with np.errstate(over="ignore", invalid="ignore"):
                rec = _record(model, state.w, train, test, grad_train,
                              epoch + 1, lr, state.grad_evals)
            if not (np.isfinite(rec.train_loss) and np.isfinite(rec.test_loss)):
                diverged = True
                break
            records.append(rec)
    return RunRecord(method_name=method.name, method=method.method, seed=seed,
                     records=records, diverged=diverged,
                     total_grad_evals=state.grad_evals)


def _summarize(cfg: ExperimentConfig, runs: list) -> list:
    summaries = []
    for m in cfg.methods:
        arm = [r for r in runs if r.method_name == m.name]
        finals = np.array([r.records[-1].test_acc if r.records and not r.diverged
                           else np.nan for r in arm])
        ok = finals[~np.isnan(finals)]
        best = float(ok.max()) if ok.size else float("nan")
        mean = float(ok.mean()) if ok.size else float("nan")
        std = float(ok.std(ddof=1)) if ok.size > 1 else 0.0 if ok.size else float("nan")
        totals = {r.total_grad_evals for r in arm if not r.diverged}
        total = totals.pop() if len(totals) == 1 else max(
            (r.total_grad_evals for r in arm), default=0)
        summaries.append(MethodSummary(m.name, best, mean, std, total))
    return summaries


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Run every (method, seed) arm; arms are independent, so thread count
    changes wall time only, never results."""
    train, test, model = build_task(cfg)
    arms = [(m, s) for m in cfg.methods for s in cfg.seeds]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(
                lambda a: run_single(cfg, a[0], a[1], train, test, model), arms))
    else:
        runs = [run_single(cfg, m, s, train, test, model) for m, s in arms]
    return RunResult(config=cfg, runs=runs, summaries=_summarize(cfg, runs))


# -- persistence ---------------------------------------------------------------

CSV_HEADER = metrics_mod.MetricRecord.CSV_FIELDS + ("status",)
SUMMARY_HEADER = ("method", "best", "mean", "std", "total_grad_evals")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_csv_name(method_name: str, seed: int) -> str:
    return f"{method_name}_seed{seed}.csv"


def write_results(result: RunResult, out_dir) -> Path:
    """Write one CSV per (method, seed), a summary CSV, and the config echo.

    Output is UTF-8 with LF line endings; floats use shortest-roundtrip
    repr, so identical runs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        path = out / run_csv_name(run.method_name, run.seed)
        status = "diverged" if run.diverged else "ok"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for rec in run.records:
                row = [_fmt(getattr(rec, f)) for f in metrics_mod.MetricRecord.CSV_FIELDS]
                writer.writerow(row + [status])
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in result.summaries:
            writer.writerow([s.method_name, _fmt(s.best), _fmt(s.mean),
                             _fmt(s.std), s.total_grad_evals])
    if result.config is not None and result.config.source_text:
        (out / "config.cfg").write_text(result.config.source_text, encoding="utf-8")
    return out


def load_results(out_dir) -> RunResult:
    """Rebuild a RunResult (records only) from a results directory."""
    out = Path(out_dir)
    paths = sorted(p for p in out.glob("*_seed*.csv"))
    if not paths:
        raise FileNotFoundError(f"no per-run CSV files under {out}")
    runs = []
    for path in paths:
        stem, seed_part = path.stem.rsplit("_seed", 1)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        records = [metrics_mod.MetricRecord(
            epoch=int(r["epoch"]), lr=float(r["lr"]), grad_evals=int(r["grad_evals"]),
            train_loss=float(r["train_loss"]), test_loss=float(r["test_loss"]),
            train_acc=float(r["train_acc"]), test_acc=float(r["test_acc"]),
            avg_sq_grad_norm=float(r["avg_sq_grad_norm"]),
            full_sq_grad_norm=float(r["full_sq_grad_norm"]),
            loss_gap=float(r["loss_gap"]), acc_gap=float(r["acc_gap"]),
        ) for r in rows]
        diverged = bool(rows) and rows[-1].get("status") == "diverged"
        total = records[-1].grad_evals if records else 0
        runs.append(RunRecord(method_name=stem, method="", seed=int(seed_part),
                              records=records, diverged=diverged,
                              total_grad_evals=total))
    return RunResult(config=None, runs=runs, summaries=[])
