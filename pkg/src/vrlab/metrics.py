"""Generalization and flatness metrics.

Two families of diagnostics: cheap per-epoch trajectory metrics (gradient
norms, loss/accuracy gaps) and on-demand landscape probes (random and
data-relevant sharpness, a curvature-scaled upper bound, and a
gradient-norm generalization-bound checker for the quadratic family).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .models import MeanQuadratic, Model, lambda_max

Array = np.ndarray

__all__ = [
    "MetricRecord",
    "SharpnessEstimate",
    "SharpnessBound",
    "BoundReport",
    "avg_sq_grad_norm",
    "full_sq_grad_norm",
    "gaussian_sharpness",
    "data_relevant_sharpness",
    "sharpness_upper_bound",
    "generalization_bound_check",
    "gap_metrics",
    "moving_average",
]


@dataclass(frozen=True)
class MetricRecord:
    """One recorded epoch of a training run."""

    epoch: int
    lr: float
    grad_evals: int
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float
    avg_sq_grad_norm: float
    full_sq_grad_norm: float
    loss_gap: float
    acc_gap: float

    CSV_FIELDS = ("epoch", "lr", "grad_evals", "train_loss", "test_loss",
                  "train_acc", "test_acc", "avg_sq_grad_norm",
                  "full_sq_grad_norm", "loss_gap", "acc_gap")


def avg_sq_grad_norm(model: Model, w: Array, data: Dataset) -> float:
    """Mean over samples of the squared per-sample objective gradient norm."""
    return float(model.per_sample_sq_grad_norms(w, data.x, data.y).mean())


def full_sq_grad_norm(model: Model, w: Array, data: Dataset) -> float:
    """Squared norm of the dataset-mean objective gradient.

    By Jensen this never exceeds :func:`avg_sq_grad_norm` on the same data.
    """
    g = model.batch_mean_grad(w, data.x, data.y)
    return float(g @ g)


@dataclass(frozen=True)
class SharpnessEstimate:
    value: float
    std_error: float
    draws: int


def gaussian_sharpness(model: Model, w: Array, data: Dataset, sigma: float,
                       draws: int, seed: int = 0) -> SharpnessEstimate:
    """Monte Carlo estimate of E[F(w + g) - F(w)], g ~ N(0, sigma I).

    ``sigma`` is the per-coordinate *variance* of the perturbation. Each of
    the ``draws`` base vectors is used as an antithetic pair +-g, which
    cancels the odd part of F exactly (a linear F gives 0 with zero
    variance). The std error is over the pair averages (0 when draws == 1).
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(sigma)
    base = model.objective(w, data.x, data.y)
    vals = np.empty(draws)
    for j in range(draws):
        g = scale * rng.standard_normal(w.size)
        up = model.objective(w + g, data.x, data.y)
        dn = model.objective(w - g, data.x, data.y)
        vals[j] = 0.5 * (up + dn) - base
    se = float(vals.std(ddof=1) / np.sqrt(draws)) if draws > 1 else 0.0
    return SharpnessEstimate(float(vals.mean()), se, draws)


def data_relevant_sharpness(model: Model, w: Array, data: Dataset, eta: float) -> float:
    """Two-sided expected loss change along per-sample gradient directions.

    Exactly ``mean_i [F(w - eta g_i) - F(w)] + mean_i [F(w + eta g_i) - F(w)]``
    with g_i the objective gradient of sample i; no sampling involved. On a
    quadratic family with curvature A this equals eta^2 * mean_i (g_i^T A g_i).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    w = np.asarray(w, dtype=np.float64)
    base = model.objective(w, data.x, data.y)
    grads = model.per_sample_grads(w, data.x, data.y)
    total = 0.0
    for g in grads:
        up = model.objective(w + eta * g, data.x, data.y)
        dn = model.objective(w - eta * g, data.x, data.y)
        total += (up - base) + (dn - base)
    return total / len(data)


class SharpnessBound(NamedTuple):
    value: float
    converged: bool


def sharpness_upper_bound(model: Model, w: Array, data: Dataset, eta: float,
                          iters: int = 200, tol: float = 1e-10,
                          seed: int = 0) -> SharpnessBound:
    """Curvature-scaled bound: eta^2 * lambda_max(H) * mean_i ||g_i||^2.

    Dominates :func:`data_relevant_sharpness` whenever the loss is quadratic
    (and, to second order, generally). The power-iteration convergence flag
    is passed through.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    lam = lambda_max(model, w, data.x, data.y, iters=iters, tol=tol, seed=seed)
    value = eta**2 * lam.value * avg_sq_grad_norm(model, w, data)
    return SharpnessBound(float(value), lam.converged)


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of the gradient-norm generalization bound.

    rhs = term_avg + term_pop + term_min, and ``holds`` records
    lhs <= rhs (with a relative rounding guard of 1e-12).
    term_pop depends on the requested form:

    * ``exact`` - ||E_pop grad f||^2 / (2 mu): the proven chain; always holds
      when every member and the population risk satisfy the P-L condition.
    * ``eq7``   - ||grad F_train||^2 / (2 mu): train-set approximation of the
      population gradient; can fail.
    * ``eq8``   - E_pop ||grad f||^2 / (2 mu): per-sample expectation form;
      dominates ``exact`` by Jensen.
    """

    form: str
    lhs: float
    term_avg: float
    term_pop: float
    term_min: float
    rhs: float
    holds: bool


def generalization_bound_check(model: Model, w: Array, train: Dataset,
                               population: Dataset, pl_mu: float,
                               form: str = "exact") -> BoundReport:
    """Check |F_train(w) - F_pop(w)| against the gradient-norm bound.

    Restricted to the quadratic family: the per-sample minima (the centres)
    and the population minimizer (the population mean centre) are exact
    there, so the middle term carries no estimation slack.
    """
    if form not in ("exact", "eq7", "eq8"):
        raise ValueError(f"form must be 'exact', 'eq7', or 'eq8', got {form!r}")
    if pl_mu <= 0:
        raise ValueError("pl_mu must be positive")
    if not isinstance(model, MeanQuadratic):
        raise TypeError("bound check needs per-sample minima in closed form; "
                        "only the quadratic family provides them")
    w = np.asarray(w, dtype=np.float64)
    inv = 1.0 / (2.0 * pl_mu)

    f_train = model.objective(w, train.x, train.y)
    f_pop = model.objective(w, population.x, population.y)
    lhs = abs(f_train - f_pop)

    term_avg = inv * avg_sq_grad_norm(model, w, train)

    if form == "exact":
        g = model.batch_mean_grad(w, population.x, population.y)
        term_pop = inv * float(g @ g)
    elif form == "eq7":
        g = model.batch_mean_grad(w, train.x, train.y)
        term_pop = inv * float(g @ g)
    else:
        term_pop = inv * avg_sq_grad_norm(model, w, population)

    # the population risk is minimized at the population mean centre (still
    # a minimizer when A is singular); each f_i attains exactly 0 at its own
    # centre, so mean_i |f_i(w_i*) - F_pop(w_*)| collapses to |F_pop(w_*)|
    w_star = population.x.mean(axis=0)
    f_star = model.objective(w_star, population.x, population.y)
    term_min = abs(f_star)

    rhs = term_avg + term_pop + term_min
    holds = lhs <= rhs * (1.0 + 1e-12) + 1e-12
    return BoundReport(form, lhs, term_avg, term_pop, term_min, rhs, holds)


def gap_metrics(model: Model, w: Array, train: Dataset, test: Dataset) -> tuple[float, float]:
    """(test_loss - train_loss, train_acc - test_acc), penalty excluded.

    Accuracy is NaN for non-classifier families, and the accuracy gap
    propagates it.
    """
    train_loss = model.data_loss(w, train.x, train.y)
    test_loss = model.data_loss(w, test.x, test.y)
    train_acc = model.accuracy(w, train.x, train.y)
    test_acc = model.accuracy(w, test.x, test.y)
    return test_loss - train_loss, train_acc - test_acc


def moving_average(series, window: int) -> Array:
    """Trailing moving average; position i averages the last min(i+1, window)
    entries, so the output has the same length as the input."""
    if window < 1:
        raise ValueError("window must be >= 1")
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("series must be 1-d")
    if s.size == 0:
        return s.copy()
    csum = np.concatenate([[0.0], np.cumsum(s)])
    out = np.empty_like(s)
    for i in range(s.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out
