"""Datasets, synthetic task generators, CSV ingestion, and batch plans.

All randomness flows through numpy's PCG64 generator
(``np.random.default_rng(seed)``); every generator below takes an explicit
seed or Generator, so identical seeds give identical datasets and batch
draws on any platform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .models import MeanQuadratic

Array = np.ndarray

__all__ = [
    "Sample",
    "Dataset",
    "SplitSpec",
    "BatchPlan",
    "CsvFormatError",
    "gen_quadratic_family",
    "gen_blobs",
    "load_csv",
    "split_dataset",
    "standardize",
    "sample_outer_batch",
    "inner_slices",
]


@dataclass
class Sample:
    x: Array
    y: float


@dataclass
class Dataset:
    """A finite collection of samples with a bookkeeping role tag."""

    x: Array  # (n, input_dim) float64
    y: Array  # (n,)
    role: str = "train"  # train | test | population

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.x.shape}")
        if len(self.x) == 0:
            raise ValueError("dataset must be non-empty")
        if len(self.y) != len(self.x):
            raise ValueError(f"{len(self.x)} feature rows but {len(self.y)} labels")
        if self.role not in ("train", "test", "population"):
            raise ValueError(f"unknown role {self.role!r}")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.x[i], self.y[i])

    def subset(self, indices, role: str | None = None) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.x[idx], self.y[idx], role or self.role)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must be in (0, 1], got {self.train_fraction}")


@dataclass(frozen=True)
class BatchPlan:
    """An outer batch plus the slicing grid its inner steps walk through.

    ``indices`` are dataset indices (distinct); inner slice t covers outer
    positions [t*inner_size, (t+1)*inner_size). Trailing positions that do
    not fill a slice are skipped by the inner loop but still belong to the
    outer batch (they count toward its mean gradient).
    """

    indices: Array
    inner_size: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or len(idx) == 0:
            raise ValueError("outer batch must be a non-empty index vector")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("outer batch indices must be distinct")
        if not 1 <= self.inner_size <= len(idx):
            raise ValueError(
                f"inner size must be in [1, {len(idx)}], got {self.inner_size}")

    @property
    def outer_size(self) -> int:
        return len(self.indices)

    @property
    def slice_count(self) -> int:
        return len(self.indices) // self.inner_size


def inner_slices(plan: BatchPlan) -> list[Array]:
    """Dataset-index arrays for each full inner slice, in outer order."""
    b = plan.inner_size
    return [plan.indices[t * b:(t + 1) * b] for t in range(plan.slice_count)]


def sample_outer_batch(data: Dataset, outer_size: int, inner_size: int,
                       rng: np.random.Generator) -> BatchPlan:
    """Draw an outer batch uniformly without replacement."""
    if not 1 <= outer_size <= len(data):
        raise ValueError(f"outer size must be in [1, {len(data)}], got {outer_size}")
    idx = rng.choice(len(data), size=outer_size, replace=False)
    return BatchPlan(idx, inner_size)


def gen_quadratic_family(n: int, dim: int, curvature, center_spread: float = 1.0,
                         seed: int = 0) -> tuple[Dataset, MeanQuadratic]:
    """Quadratic-bowl task: n centres ~ N(0, center_spread^2 I), shared curvature.

    Returns the dataset of centres together with the model that interprets
    them into per-sample losses.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if center_spread < 0:
        raise ValueError("center_spread must be nonnegative")
    model = MeanQuadratic(curvature, dim=dim)
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_spread, (n, dim)) if center_spread > 0 else np.zeros((n, dim))
    return Dataset(centers, np.zeros(n), role="train"), model


def gen_blobs(n: int, dim: int, classes: int = 2, separation: float = 2.0,
              seed: int = 0) -> Dataset:
    """Gaussian-cluster classification task with balanced labels.

    Class centres are drawn from N(0, separation^2 I); points add unit
    Gaussian noise around their centre. Class counts differ by at most one
    (the first ``n mod classes`` classes get the extra sample).
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if n < classes:
        raise ValueError("need at least one sample per class")
    if separation <= 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    centers = separation * rng.standard_normal((classes, dim))
    base, extra = divmod(n, classes)
    counts = [base + (1 if c < extra else 0) for c in range(classes)]
    y = np.repeat(np.arange(classes), counts)
    x = centers[y] + rng.standard_normal((n, dim))
    return Dataset(x, y.astype(np.int64), role="train")


def split_dataset(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset | None]:
    """Shuffled train/test split; test is None when the fraction is 1."""
    n = len(data)
    k = int(spec.train_fraction * n + 0.5)
    k = min(max(k, 1), n)
    perm = np.random.default_rng(spec.seed).permutation(n)
    train = data.subset(perm[:k], role="train")
    test = data.subset(perm[k:], role="test") if k < n else None
    return train, test


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Shift/scale every feature column by the train set's mean and std.

    Constant columns are left unscaled (std treated as 1).
    """
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    out = []
    for ds in (train, *others):
        out.append(Dataset((ds.x - mean) / std, ds.y, ds.role))
    return tuple(out)


class CsvFormatError(ValueError):
    """Malformed CSV input; the message names the offending 1-based line."""


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_csv(path, label_column=-1, normalize: bool = False) -> Dataset:
    """Load a numeric CSV into a Dataset.

    A header is auto-detected: if any cell of the first line fails to parse
    as a number, the line is treated as column names. ``label_column`` may
    be a column index (negative allowed) or, when a header is present, a
    column name. Labels that are all integral come back as int64. With
    ``normalize`` every feature column is standardized by this file's own
    mean/std.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(ln, row) for ln, row in enumerate(rows, start=1) if row and any(c.strip() for c in row)]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")

    header = None
    if any(not _is_number(cell) for cell in rows[0][1]):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise CsvFormatError(f"{path}: header but no data rows")

    if isinstance(label_column, str):
        if header is None:
            raise CsvFormatError(f"{path}: label column {label_column!r} needs a header line")
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise CsvFormatError(f"{path}: no column named {label_column!r} in header") from None
    else:
        label_idx = int(label_column)

    width = len(rows[0][1])
    if not -width <= label_idx < width:
        raise CsvFormatError(f"{path}: label column {label_idx} out of range for {width} columns")
    label_idx %= width

    feats, labels = [], []
    for ln, row in rows:
        if len(row) != width:
            raise CsvFormatError(f"{path}: line {ln}: expected {width} fields, got {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise CsvFormatError(f"{path}: line {ln}: non-numeric value {bad.strip()!r}") from None
        labels.append(values[label_idx])
        feats.append([v for j, v in enumerate(values) if j != label_idx])
    if width < 2:
        raise CsvFormatError(f"{path}: need at least one feature column besides the label")

    x = np.asarray(feats, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if np.all(y == np.floor(y)):
        y = y.astype(np.int64)
    ds = Dataset(x, y, role="train")
    if normalize:
        ds = standardize(ds)[0]
    return ds
