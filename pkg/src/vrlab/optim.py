"""Optimizer steps: SGD variants and outer-batch SVRG with both sign choices.

The SVRG-style update anchors a control variate at a snapshot ``w_snap``
with mean gradient ``mu`` over a freshly drawn outer batch, then walks the
batch in inner slices of ``inner_size`` samples:

    w <- w - lr * ( g_slice(w) -+ ( g_slice(w_snap) - mu ) )

``variant="minus"`` subtracts the control variate (variance reduction);
``variant="plus"`` adds it (variance promotion). When the outer batch equals
the whole training set the minus variant recovers classic SVRG; when the
outer batch equals one slice both variants reduce to plain SGD exactly.

Snapshot slice gradients can be cached from the mu pass (default) or
recomputed in the inner loop; the two policies produce identical iterates
and differ only in the gradient-evaluation count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import BatchPlan, Dataset
from .models import Model

Array = np.ndarray

__all__ = [
    "SGD_METHODS",
    "SVRG_METHODS",
    "ALL_METHODS",
    "SIGN_OF_METHOD",
    "Schedule",
    "OptimizerState",
    "init_state",
    "lr_at_epoch",
    "sgd_step",
    "svrg_outer_iteration",
    "modified_sgd_outer_iteration",
    "grad_evals_for",
]

SGD_METHODS = ("sgd", "momentum", "nag")
SVRG_METHODS = ("bsvrg", "bpsvrg")
ALL_METHODS = SGD_METHODS + SVRG_METHODS + ("modified_sgd",)
SIGN_OF_METHOD = {"bsvrg": "minus", "bpsvrg": "plus"}


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant decay: divide the lr by ``factor`` at each milestone.

    Milestones are fractions of the total epoch count; a milestone at
    fraction p takes effect from epoch ceil(p * total) on (0-based epochs).
    """

    initial_lr: float
    total_epochs: int
    milestones: tuple[float, ...] = ()
    factor: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(self.milestones))
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if any(not 0.0 < p < 1.0 for p in self.milestones):
            raise ValueError("milestones must be fractions in (0, 1)")
        if list(self.milestones) != sorted(set(self.milestones)):
            raise ValueError("milestones must be strictly increasing")
        if self.milestones and self.factor <= 1.0:
            raise ValueError("factor must be > 1")


def _milestone_epoch(fraction: float, total: int) -> int:
    # guard the ceiling against fp noise: 0.4 * 100 is 40.000000000000006
    return math.ceil(fraction * total - 1e-9)


def lr_at_epoch(schedule: Schedule, epoch: int) -> float:
    if not 0 <= epoch < schedule.total_epochs:
        raise ValueError(
            f"epoch {epoch} outside schedule range [0, {schedule.total_epochs})")
    drops = sum(1 for p in schedule.milestones
                if epoch >= _milestone_epoch(p, schedule.total_epochs))
    return schedule.initial_lr / schedule.factor**drops


@dataclass
class OptimizerState:
    """Mutable per-run optimizer state.

    ``snapshot`` and ``snapshot_grad`` hold the anchor point and its
    outer-batch mean gradient; they are written together once per outer
    iteration and stay None for the sgd family. ``grad_evals`` counts
    per-sample gradient evaluations (loss-only passes of the modified-SGD
    control included, for cost parity).
    """

    method: str
    w: Array
    snapshot: Array | None = None
    snapshot_grad: Array | None = None
    velocity: Array | None = None
    epoch: int = 0
    grad_evals: int = 0


def init_state(method: str, w0: Array) -> OptimizerState:
    if method not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    w0 = np.asarray(w0, dtype=np.float64).copy()
    velocity = np.zeros_like(w0) if method in ("momentum", "nag") else None
    return OptimizerState(method=method, w=w0, velocity=velocity)


def sgd_step(state: OptimizerState, model: Model, x: Array, y: Array, lr: float,
             momentum: float = 0.0, nesterov: bool = False) -> OptimizerState:
    """One (heavy-ball / Nesterov) SGD step on the given batch.

    momentum = 0:  w <- w - lr * g
    heavy ball:    v <- momentum * v + g;  w <- w - lr * v
    nesterov:      v <- momentum * v + g;  w <- w - lr * (g + momentum * v)
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must be in [0, 1)")
    g = model.batch_mean_grad(state.w, x, y)
    if momentum == 0.0:
        state.w = state.w - lr * g
    else:
        if state.velocity is None:
            state.velocity = np.zeros_like(state.w)
        state.velocity = momentum * state.velocity + g
        if nesterov:
            state.w = state.w - lr * (g + momentum * state.velocity)
        else:
            state.w = state.w - lr * state.velocity
    state.grad_evals += len(np.atleast_1d(y))
    return state


def _snapshot_pass(model: Model, w_snap: Array, xs: Array, ys: Array,
                   plan: BatchPlan) -> tuple[list[Array], Array]:
    """Slice gradients at the snapshot plus the outer-batch mean gradient.

    Trailing samples beyond the last full slice still contribute to the
    mean; every outer-batch sample is evaluated exactly once.
    """
    b = plan.inner_size
    m = plan.slice_count
    slice_grads = [model.batch_mean_grad(w_snap, xs[t * b:(t + 1) * b], ys[t * b:(t + 1) * b])
                   for t in range(m)]
    total = plan.outer_size
    rem = total - m * b
    acc = b * sum(slice_grads)
    if rem:
        acc = acc + rem * model.batch_mean_grad(w_snap, xs[m * b:], ys[m * b:])
    return slice_grads, acc / total


def svrg_outer_iteration(state: OptimizerState, model: Model, data: Dataset,
                         plan: BatchPlan, lr: float, variant: str,
                         caching: bool = True,
                         term_log: list | None = None) -> OptimizerState:
    """One outer iteration: snapshot pass, then ``slice_count`` inner steps.

    ``term_log``, when given, receives each inner update term (the vector
    multiplying -lr), which is what tests inspect.
    """
    if variant not in ("minus", "plus"):
        raise ValueError(f"variant must be 'minus' or 'plus', got {variant!r}")
    if state.method not in SVRG_METHODS:
        raise ValueError(f"state method {state.method!r} is not an SVRG-family method")
    if SIGN_OF_METHOD[state.method] != variant:
        raise ValueError(f"method {state.method!r} uses the "
                         f"{SIGN_OF_METHOD[state.method]!r} variant, got {variant!r}")
    if lr <= 0:
        raise ValueError("lr must be positive")

    sign = -1.0 if variant == "minus" else 1.0
    xs = data.x[plan.indices]
    ys = data.y[plan.indices]
    b = plan.inner_size

    w_snap = state.w
    slice_grads, mu = _snapshot_pass(model, w_snap, xs, ys, plan)
    state.grad_evals += plan.outer_size

    w = w_snap
    for t in range(plan.slice_count):
        sx = xs[t * b:(t + 1) * b]
        sy = ys[t * b:(t + 1) * b]
        g_cur = model.batch_mean_grad(w, sx, sy)
        state.grad_evals += b
        if caching:
            g_snap = slice_grads[t]
        else:
            g_snap = model.batch_mean_grad(w_snap, sx, sy)
            state.grad_evals += b
        term = g_cur + sign * (g_snap - mu)
        if term_log is not None:
            term_log.append(term)
        w = w - lr * term

    state.w = w
    state.snapshot = w_snap
    state.snapshot_grad = mu
    return state


def modified_sgd_outer_iteration(state: OptimizerState, model: Model, data: Dataset,
                                 plan: BatchPlan, lr: float) -> OptimizerState:
    """SGD with SVRG's cost shape: a loss-only pass over the slices, then
    plain SGD steps over the same slices in order.

    The first pass changes no statistics here (no normalization layers in
    these families) but is executed and counted so budgets stay comparable.
    """
    if state.method != "modified_sgd":
        raise ValueError(f"state method {state.method!r} is not 'modified_sgd'")
    if lr <= 0:
        raise ValueError("lr must be positive")
    xs = data.x[plan.indices]
    ys = data.y[plan.indices]
    b = plan.inner_size
    m = plan.slice_count

    for t in range(m):
        model.per_sample_losses(state.w, xs[t * b:(t + 1) * b], ys[t * b:(t + 1) * b])
    state.grad_evals += m * b

    w = state.w
    for t in range(m):
        g = model.batch_mean_grad(w, xs[t * b:(t + 1) * b], ys[t * b:(t + 1) * b])
        state.grad_evals += b
        w = w - lr * g
    state.w = w
    return state


def grad_evals_for(method: str, outer_size: int, inner_size: int,
                   caching: bool = True) -> int:
    """Per-sample gradient evaluations of one outer iteration (closed form)."""
    if method not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if inner_size < 1 or outer_size < inner_size:
        raise ValueError("need 1 <= inner_size <= outer_size")
    slices = outer_size // inner_size
    if method in SVRG_METHODS:
        per_step = 1 if caching else 2
        return outer_size + per_step * inner_size * slices
    if method == "modified_sgd":
        return 2 * inner_size * slices
    return inner_size * slices
