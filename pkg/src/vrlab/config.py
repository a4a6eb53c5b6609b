"""Experiment configuration: flat INI-style text parsed into dataclasses.

A config has three fixed sections plus one ``[method NAME]`` section per
optimizer arm::

    [experiment]
    epochs = 40          # base epoch count for the SVRG family
    seed = 1             # first repeat seed ...
    repeats = 5          # ... or an explicit list: seeds = 1 2 3 4 5
    cadence = 1          # record metrics every k epochs
    out = results/run    # output directory (CLI --out overrides)
    budget_match = true  # sgd-family arms run round(1.5 * epochs) epochs
    caching = true       # reuse snapshot slice gradients from the mu pass
    metric_subsample = 0 # 0 = full-dataset gradient-norm metrics

    [dataset]
    kind = blobs         # blobs | quadratic | csv
    ...kind-specific keys (see _build_dataset_spec)

    [model]
    kind = mlp           # mlp | logistic | quadratic
    ...

    [method bpsvrg]
    method = bpsvrg      # sgd | momentum | nag | bsvrg | bpsvrg | modified_sgd
    lr = 0.1
    inner_batch = 10
    outer_batch = 20     # defaults to 2 * inner_batch for the SVRG family
    milestones = 0.4 0.6 0.8   # empty/omitted = constant lr
    decay_factor = 10
    momentum = 0.9       # sgd family only
    weight_decay = 0.0   # overrides the model's l2 for this arm
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .optim import ALL_METHODS, SGD_METHODS

__all__ = [
    "ConfigError",
    "DatasetSpec",
    "ModelSpec",
    "MethodSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
]


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    seed: int = 0
    train_fraction: float = 1.0
    # blobs
    n: int = 0
    dim: int = 0
    classes: int = 2
    separation: float = 2.0
    # quadratic
    curvature: tuple[float, ...] = (1.0,)
    center_spread: float = 1.0
    # csv
    path: str = ""
    label_column: str = "-1"
    normalize: bool = False


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hidden: int = 100
    activation: str = "relu"
    l2: float = 0.0


@dataclass(frozen=True)
class MethodSpec:
    name: str
    method: str
    lr: float = 0.1
    momentum: float = 0.0
    inner_batch: int = 10
    outer_batch: int = 0  # 0 -> 2 * inner_batch for SVRG-family methods
    milestones: tuple[float, ...] = ()
    decay_factor: float = 10.0
    weight_decay: float | None = None

    def resolved_outer(self) -> int:
        if self.method in SGD_METHODS:
            return self.inner_batch
        return self.outer_batch if self.outer_batch else 2 * self.inner_batch


@dataclass(frozen=True)
class ExperimentConfig:
    epochs: int
    seeds: tuple[int, ...]
    cadence: int
    out_dir: str
    budget_match: bool
    caching: bool
    metric_subsample: int
    dataset: DatasetSpec
    model: ModelSpec
    methods: tuple[MethodSpec, ...]
    source_text: str = field(default="", compare=False)


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def parse_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"config is not parseable: {exc}") from None
    overrides = overrides or {}

    for section in ("experiment", "dataset", "model"):
        if section not in cp:
            raise ConfigError(f"missing [{section}] section")

    exp = cp["experiment"]
    try:
        epochs = exp.getint("epochs")
        cadence = exp.getint("cadence", 1)
        budget_match = exp.getboolean("budget_match", True)
        caching = exp.getboolean("caching", True)
        metric_subsample = exp.getint("metric_subsample", 0)
        if "seeds" in exp:
            seeds = _ints(exp["seeds"])
        else:
            base = overrides.get("seed", exp.getint("seed", 1))
            repeats = exp.getint("repeats", 1)
            seeds = tuple(range(base, base + repeats))
        if "seed" in overrides and "seeds" in exp:
            repeats = len(_ints(exp["seeds"]))
            seeds = tuple(range(overrides["seed"], overrides["seed"] + repeats))
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from None
    if epochs is None:
        raise ConfigError("[experiment] needs an epochs key")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if cadence < 1:
        raise ConfigError(f"cadence must be >= 1, got {cadence}")
    if metric_subsample < 0:
        raise ConfigError("metric_subsample must be >= 0")
    if not seeds:
        raise ConfigError("need at least one repeat seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"repeat seeds must be distinct, got {seeds}")
    out_dir = str(overrides.get("out", exp.get("out", "results")))

    dataset = _build_dataset_spec(cp["dataset"])
    model = _build_model_spec(cp["model"], dataset)

    methods = []
    for section in cp.sections():
        if not section.startswith("method"):
            continue
        name = section[len("method"):].strip() or cp[section].get("method", section)
        methods.append(_build_method_spec(name, cp[section]))
    if not methods:
        raise ConfigError("need at least one [method NAME] section")
    if len({m.name for m in methods}) != len(methods):
        raise ConfigError("method section names must be distinct")

    n_train = _train_size(dataset)
    for m in methods:
        if n_train and m.resolved_outer() > n_train:
            raise ConfigError(f"method {m.name!r}: outer batch {m.resolved_outer()} "
                              f"exceeds the training-set size {n_train}")

    return ExperimentConfig(
        epochs=epochs, seeds=tuple(seeds), cadence=cadence, out_dir=out_dir,
        budget_match=budget_match, caching=caching,
        metric_subsample=metric_subsample, dataset=dataset, model=model,
        methods=tuple(methods), source_text=text,
    )


def _train_size(ds: DatasetSpec) -> int:
    if ds.kind == "csv":
        return 0  # unknown until load time; run_experiment re-validates
    return int(ds.train_fraction * ds.n + 0.5) if ds.n else 0


def _build_dataset_spec(sec) -> DatasetSpec:
    kind = sec.get("kind", "")
    if kind not in ("blobs", "quadratic", "csv"):
        raise ConfigError(f"[dataset] kind must be blobs, quadratic, or csv, got {kind!r}")
    try:
        common = dict(
            kind=kind,
            seed=sec.getint("seed", 0),
            train_fraction=sec.getfloat("train_fraction", 1.0),
        )
        if kind == "blobs":
            spec = DatasetSpec(
                n=sec.getint("n"), dim=sec.getint("dim"),
                classes=sec.getint("classes", 2),
                separation=sec.getfloat("separation", 2.0), **common)
            if spec.n is None or spec.dim is None:
                raise ConfigError("[dataset] blobs needs n and dim")
        elif kind == "quadratic":
            spec = DatasetSpec(
                n=sec.getint("n"), dim=sec.getint("dim"),
                curvature=_floats(sec.get("curvature", "1.0")),
                center_spread=sec.getfloat("center_spread", 1.0), **common)
            if spec.n is None or spec.dim is None:
                raise ConfigError("[dataset] quadratic needs n and dim")
        else:
            spec = DatasetSpec(
                path=sec.get("path", ""),
                label_column=sec.get("label_column", "-1"),
                normalize=sec.getboolean("normalize", False), **common)
            if not spec.path:
                raise ConfigError("[dataset] csv needs a path")
    except ValueError as exc:
        raise ConfigError(f"[dataset]: {exc}") from None
    if not 0.0 < spec.train_fraction <= 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1], got {spec.train_fraction}")
    return spec


def _build_model_spec(sec, dataset: DatasetSpec) -> ModelSpec:
    kind = sec.get("kind", "")
    if kind not in ("mlp", "logistic", "quadratic"):
        raise ConfigError(f"[model] kind must be mlp, logistic, or quadratic, got {kind!r}")
    if (kind == "quadratic") != (dataset.kind == "quadratic"):
        raise ConfigError("the quadratic model and the quadratic dataset require each other")
    try:
        spec = ModelSpec(
            kind=kind,
            hidden=sec.getint("hidden", 100),
            activation=sec.get("activation", "relu"),
            l2=sec.getfloat("l2", 0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from None
    if spec.hidden < 1:
        raise ConfigError("hidden must be >= 1")
    if spec.activation not in ("relu", "tanh"):
        raise ConfigError(f"activation must be relu or tanh, got {spec.activation!r}")
    if spec.l2 < 0:
        raise ConfigError("l2 must be nonnegative")
    return spec


def _build_method_spec(name: str, sec) -> MethodSpec:
    method = sec.get("method", "")
    if method not in ALL_METHODS:
        raise ConfigError(f"method {name!r}: algorithm must be one of {ALL_METHODS}, got {method!r}")
    try:
        default_momentum = 0.9 if method in ("momentum", "nag") else 0.0
        spec = MethodSpec(
            name=name,
            method=method,
            lr=sec.getfloat("lr", 0.1),
            momentum=sec.getfloat("momentum", default_momentum),
            inner_batch=sec.getint("inner_batch", 10),
            outer_batch=sec.getint("outer_batch", 0),
            milestones=_floats(sec.get("milestones", "")),
            decay_factor=sec.getfloat("decay_factor", 10.0),
            weight_decay=sec.getfloat("weight_decay") if "weight_decay" in sec else None,
        )
    except ValueError as exc:
        raise ConfigError(f"method {name!r}: {exc}") from None
    if spec.lr <= 0:
        raise ConfigError(f"method {name!r}: lr must be positive")
    if spec.inner_batch < 1:
        raise ConfigError(f"method {name!r}: inner_batch must be >= 1")
    if spec.outer_batch and spec.outer_batch < spec.inner_batch:
        raise ConfigError(f"method {name!r}: outer_batch ({spec.outer_batch}) "
                          f"must be >= inner_batch ({spec.inner_batch})")
    if not 0.0 <= spec.momentum < 1.0:
        raise ConfigError(f"method {name!r}: momentum must be in [0, 1)")
    if method not in ("momentum", "nag") and spec.momentum:
        raise ConfigError(f"method {name!r}: momentum applies only to the "
                          f"momentum/nag methods")
    if spec.weight_decay is not None and spec.weight_decay < 0:
        raise ConfigError(f"method {name!r}: weight_decay must be nonnegative")
    if any(not 0.0 < p < 1.0 for p in spec.milestones):
        raise ConfigError(f"method {name!r}: milestones must be fractions in (0, 1)")
    if spec.milestones and spec.decay_factor <= 1.0:
        raise ConfigError(f"method {name!r}: decay_factor must be > 1")
    return spec
