"""Differentiable model families with exact per-sample gradients.

Every family stores its parameters in one flat float64 vector so optimizers
and metrics can treat models uniformly. Each family provides vectorized
per-sample losses and gradients, batch-mean gradients, Hessian-vector
products, and closed-form per-sample squared gradient norms (the latter avoid
materializing an (n, dim) gradient matrix on full-dataset metric sweeps).

Conventions shared by all families:

* a batch is a pair of arrays ``x`` of shape (m, input_dim) and ``y`` of
  shape (m,); single samples go through :class:`vrlab.data.Sample`;
* the optional L2 penalty is ``0.5 * l2 * ||w||^2`` added to every
  per-sample objective, so every gradient evaluation carries ``l2 * w``;
* reported (data) losses exclude the penalty.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

Array = np.ndarray

__all__ = [
    "Model",
    "MeanQuadratic",
    "LogisticRegression",
    "TwoLayerMLP",
    "LambdaMaxResult",
    "per_sample_loss",
    "per_sample_grad",
    "batch_grad",
    "hvp",
    "lambda_max",
    "check_grad_fd",
]


def _as_float_params(w: Array, dim: int) -> Array:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dim,):
        raise ValueError(f"parameter vector must have shape ({dim},), got {w.shape}")
    return w


def _as_batch(x: Array, y, input_dim: int) -> tuple[Array, Array]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ValueError(f"batch features must have shape (m, {input_dim}), got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("batch must contain at least one sample")
    y = np.atleast_1d(np.asarray(y))
    if y.shape != (x.shape[0],):
        raise ValueError(f"batch labels must have shape ({x.shape[0]},), got {y.shape}")
    return x, y


def _log_softmax(z: Array) -> Array:
    # stable: shift by the row max before exponentiating
    s = z - z.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


class Model:
    """Base class; concrete families fill in the vectorized primitives."""

    dim: int
    input_dim: int
    l2: float = 0.0

    # -- required primitives -------------------------------------------------

    def init_params(self, rng: np.random.Generator) -> Array:
        raise NotImplementedError

    def per_sample_losses(self, w: Array, x: Array, y: Array) -> Array:
        """Per-sample training objective f_i(w), penalty included. Shape (m,)."""
        raise NotImplementedError

    def per_sample_data_losses(self, w: Array, x: Array, y: Array) -> Array:
        """Per-sample loss with the L2 penalty excluded. Shape (m,)."""
        raise NotImplementedError

    def per_sample_grads(self, w: Array, x: Array, y: Array) -> Array:
        """Stacked per-sample objective gradients, shape (m, dim)."""
        raise NotImplementedError

    def batch_mean_grad(self, w: Array, x: Array, y: Array) -> Array:
        """Mean of the per-sample gradients over the batch, shape (dim,)."""
        raise NotImplementedError

    def per_sample_sq_grad_norms(self, w: Array, x: Array, y: Array) -> Array:
        """``||grad f_i(w)||^2`` per sample without materializing the grads."""
        raise NotImplementedError

    def hvp(self, w: Array, x: Array, y: Array, v: Array) -> Array:
        """Hessian-vector product of the batch-mean objective."""
        raise NotImplementedError

    # -- shared conveniences --------------------------------------------------

    def objective(self, w: Array, x: Array, y: Array) -> float:
        return float(self.per_sample_losses(w, x, y).mean())

    def data_loss(self, w: Array, x: Array, y: Array) -> float:
        return float(self.per_sample_data_losses(w, x, y).mean())

    def predict(self, w: Array, x: Array) -> Array | None:
        return None

    def accuracy(self, w: Array, x: Array, y: Array) -> float:
        pred = self.predict(w, x)
        if pred is None:
            return float("nan")
        return float(np.mean(pred == np.asarray(y)))

    def _penalty(self, w: Array) -> float:
        return 0.5 * self.l2 * float(w @ w)


class MeanQuadratic(Model):
    """Family of quadratic bowls ``f_i(w) = 0.5 (w - c_i)^T A (w - c_i)``.

    All members share one symmetric positive semidefinite curvature matrix
    ``A``; each sample's feature vector is the centre ``c_i`` of its bowl and
    targets are ignored. ``pl_mu`` (the Polyak-Lojasiewicz constant shared by
    every member and by any mixture of members) equals the smallest
    eigenvalue of ``A``.

    ``curvature`` may be a scalar (``A = c I`` needs an explicit ``dim``),
    a 1-d array (diagonal), or a full matrix.
    """

    def __init__(self, curvature, dim: int | None = None):
        a = np.asarray(curvature, dtype=np.float64)
        if a.ndim == 0:
            if dim is None:
                raise ValueError("scalar curvature needs an explicit dim")
            a = np.eye(dim) * float(a)
        elif a.ndim == 1:
            a = np.diag(a)
        elif a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("curvature must be scalar, 1-d, or a square matrix")
        if dim is not None and a.shape[0] != dim:
            raise ValueError(f"curvature is {a.shape[0]}x{a.shape[0]}, expected dim {dim}")
        if not np.allclose(a, a.T, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
            raise ValueError("curvature must be symmetric")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] < -1e-10 * max(1.0, float(eigs[-1])):
            raise ValueError(f"curvature must be positive semidefinite (min eig {eigs[0]:.3e})")
        self.curvature = a
        self.dim = self.input_dim = a.shape[0]
        self.pl_mu = float(max(eigs[0], 0.0))
        self.lam_max_exact = float(eigs[-1])

    def init_params(self, rng: np.random.Generator) -> Array:
        return rng.standard_normal(self.dim)

    def _prep(self, w, x):
        # targets are ignored by this family; only features are validated
        w = _as_float_params(w, self.dim)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"centres must have shape (m, {self.input_dim}), got {x.shape}")
        if x.shape[0] == 0:
            raise ValueError("batch must contain at least one sample")
        return w, x

    def per_sample_losses(self, w, x, y=None):
        w, x = self._prep(w, x)
        d = w[None, :] - x
        return 0.5 * np.einsum("ij,jk,ik->i", d, self.curvature, d)

    per_sample_data_losses = per_sample_losses

    def per_sample_grads(self, w, x, y=None):
        w, x = self._prep(w, x)
        return (w[None, :] - x) @ self.curvature  # A symmetric, rows are A (w - c_i)

    def batch_mean_grad(self, w, x, y):
        return self.per_sample_grads(w, x, y).mean(axis=0)

    def per_sample_sq_grad_norms(self, w, x, y):
        g = self.per_sample_grads(w, x, y)
        return np.einsum("ij,ij->i", g, g)

    def hvp(self, w, x, y, v):
        v = _as_float_params(v, self.dim)
        return self.curvature @ v


class LogisticRegression(Model):
    """Multinomial softmax regression on a flat parameter vector.

    Packing: the (input_dim x classes) weight matrix row-major, then the
    class biases. Logits are ``x @ W + b``. Initialization is uniform in
    ``+-1/sqrt(input_dim)`` from the supplied generator.
    """

    def __init__(self, input_dim: int, classes: int, l2: float = 0.0):
        if input_dim < 1 or classes < 2:
            raise ValueError("need input_dim >= 1 and classes >= 2")
        if l2 < 0:
            raise ValueError("l2 must be nonnegative")
        self.input_dim = input_dim
        self.classes = classes
        self.l2 = float(l2)
        self.dim = input_dim * classes + classes

    def _unpack(self, w: Array) -> tuple[Array, Array]:
        k = self.input_dim * self.classes
        return w[:k].reshape(self.input_dim, self.classes), w[k:]

    def init_params(self, rng: np.random.Generator) -> Array:
        bound = 1.0 / np.sqrt(self.input_dim)
        return rng.uniform(-bound, bound, self.dim)

    def _prep(self, w, x, y):
        w = _as_float_params(w, self.dim)
        x, y = _as_batch(x, y, self.input_dim)
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer):
            yi = y.astype(np.int64)
            if not np.array_equal(yi, y):
                raise ValueError("class labels must be integers")
            y = yi
        if y.min() < 0 or y.max() >= self.classes:
            raise ValueError(f"labels must lie in [0, {self.classes})")
        return w, x, y

    def _logits(self, w, x):
        wmat, b = self._unpack(w)
        return x @ wmat + b

    def per_sample_data_losses(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        ls = _log_softmax(self._logits(w, x))
        return -ls[np.arange(x.shape[0]), y]

    def per_sample_losses(self, w, x, y):
        w = _as_float_params(w, self.dim)
        return self.per_sample_data_losses(w, x, y) + self._penalty(w)

    def _residuals(self, w, x, y):
        # softmax probabilities minus the one-hot target, shape (m, classes)
        z = self._logits(w, x)
        r = np.exp(_log_softmax(z))
        r[np.arange(x.shape[0]), y] -= 1.0
        return z, r

    def per_sample_grads(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        _, r = self._residuals(w, x, y)
        gw = np.einsum("mi,mk->mik", x, r).reshape(x.shape[0], -1)
        g = np.concatenate([gw, r], axis=1)
        if self.l2:
            g += self.l2 * w[None, :]
        return g

    def batch_mean_grad(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        m = x.shape[0]
        _, r = self._residuals(w, x, y)
        gw = x.T @ r / m
        gb = r.mean(axis=0)
        g = np.concatenate([gw.ravel(), gb])
        if self.l2:
            g += self.l2 * w
        return g

    def per_sample_sq_grad_norms(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        z, r = self._residuals(w, x, y)
        rr = np.einsum("mk,mk->m", r, r)
        out = (np.einsum("mi,mi->m", x, x) + 1.0) * rr
        if self.l2:
            # <g_data, w> = r . z per sample, since z = x W + b
            out += 2.0 * self.l2 * np.einsum("mk,mk->m", r, z) + self.l2**2 * float(w @ w)
        return out

    def hvp(self, w, x, y, v):
        """Exact product: the loss is convex in the logits and linear in w."""
        w, x, y = self._prep(w, x, y)
        v = _as_float_params(v, self.dim)
        m = x.shape[0]
        z = self._logits(w, x)
        p = np.exp(_log_softmax(z))
        vw, vb = self._unpack(v)
        u = x @ vw + vb  # directional derivative of the logits
        s = p * u
        dr = s - p * s.sum(axis=1, keepdims=True)  # (diag(p) - p p^T) u per row
        hw = x.T @ dr / m
        hb = dr.mean(axis=0)
        h = np.concatenate([hw.ravel(), hb])
        if self.l2:
            h += self.l2 * v
        return h

    def predict(self, w, x):
        w = _as_float_params(w, self.dim)
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self._logits(w, x).argmax(axis=1)


class TwoLayerMLP(Model):
    """Softmax classifier with two equal-width fully-connected hidden layers.

    Forward pass: ``a1 = act(x W1 + b1)``, ``a2 = act(a1 W2 + b2)``,
    logits ``= a2 W3 + b3``, softmax cross-entropy loss.

    Packing order (fixed so checkpoints and tests are reproducible):
    W1 row-major, b1, W2, b2, W3, b3. Weights *and* biases initialize
    uniform in ``+-1/sqrt(fan_in)`` of their layer, drawn in packing order
    from the supplied generator.

    ``activation`` is ``"relu"`` (derivative 0 at the kink) or ``"tanh"``.
    Hessian-vector products use central differences of the analytic gradient
    with step ``hvp_step`` (default 1e-4) along the normalized direction.
    """

    hvp_step = 1e-4

    def __init__(self, input_dim: int, hidden: int = 100, classes: int = 2,
                 activation: str = "relu", l2: float = 0.0):
        if input_dim < 1 or hidden < 1 or classes < 2:
            raise ValueError("need input_dim >= 1, hidden >= 1, classes >= 2")
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        if l2 < 0:
            raise ValueError("l2 must be nonnegative")
        self.input_dim = input_dim
        self.hidden = hidden
        self.classes = classes
        self.activation = activation
        self.l2 = float(l2)
        self._shapes = [(input_dim, hidden), (hidden,), (hidden, hidden), (hidden,),
                        (hidden, classes), (classes,)]
        self.dim = sum(int(np.prod(s)) for s in self._shapes)

    def _unpack(self, w: Array) -> list[Array]:
        parts, k = [], 0
        for s in self._shapes:
            size = int(np.prod(s))
            parts.append(w[k:k + size].reshape(s))
            k += size
        return parts

    def init_params(self, rng: np.random.Generator) -> Array:
        chunks = []
        for s in self._shapes:
            fan_in = s[0] if len(s) == 2 else self._fan_in_for_bias(len(chunks))
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, int(np.prod(s))))
        return np.concatenate(chunks)

    def _fan_in_for_bias(self, part_index: int) -> int:
        # bias chunks follow their weight chunk; reuse its fan-in
        return self._shapes[part_index - 1][0]

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _dact(self, z, a):
        return (z > 0).astype(np.float64) if self.activation == "relu" else 1.0 - a * a

    def _prep(self, w, x, y):
        w = _as_float_params(w, self.dim)
        x, y = _as_batch(x, y, self.input_dim)
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer):
            yi = y.astype(np.int64)
            if not np.array_equal(yi, y):
                raise ValueError("class labels must be integers")
            y = yi
        if y.min() < 0 or y.max() >= self.classes:
            raise ValueError(f"labels must lie in [0, {self.classes})")
        return w, x, y

    def _forward(self, w, x):
        w1, b1, w2, b2, w3, b3 = self._unpack(w)
        z1 = x @ w1 + b1
        a1 = self._act(z1)
        z2 = a1 @ w2 + b2
        a2 = self._act(z2)
        z3 = a2 @ w3 + b3
        return z1, a1, z2, a2, z3

    def _backward(self, w, x, y):
        """Per-sample deltas (unscaled by 1/m) and cached activations."""
        z1, a1, z2, a2, z3 = self._forward(w, x)
        d3 = np.exp(_log_softmax(z3))
        d3[np.arange(x.shape[0]), y] -= 1.0
        _, _, w2, _, w3, _ = self._unpack(w)
        d2 = (d3 @ w3.T) * self._dact(z2, a2)
        d1 = (d2 @ w2.T) * self._dact(z1, a1)
        return (z1, a1, z2, a2, z3), (d1, d2, d3)

    def per_sample_data_losses(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        z3 = self._forward(w, x)[-1]
        return -_log_softmax(z3)[np.arange(x.shape[0]), y]

    def per_sample_losses(self, w, x, y):
        w = _as_float_params(w, self.dim)
        return self.per_sample_data_losses(w, x, y) + self._penalty(w)

    def per_sample_grads(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        (_, a1, _, a2, _), (d1, d2, d3) = self._backward(w, x, y)
        m = x.shape[0]
        pieces = []
        for a_prev, d in ((x, d1), (a1, d2), (a2, d3)):
            pieces.append(np.einsum("mi,mo->mio", a_prev, d).reshape(m, -1))
            pieces.append(d)
        g = np.concatenate(pieces, axis=1)
        if self.l2:
            g += self.l2 * w[None, :]
        return g

    def batch_mean_grad(self, w, x, y):
        w, x, y = self._prep(w, x, y)
        (_, a1, _, a2, _), (d1, d2, d3) = self._backward(w, x, y)
        m = x.shape[0]
        g = np.concatenate([
            (x.T @ d1).ravel(), d1.sum(axis=0),
            (a1.T @ d2).ravel(), d2.sum(axis=0),
            (a2.T @ d3).ravel(), d3.sum(axis=0),
        ]) / m
        if self.l2:
            g += self.l2 * w
        return g

    def per_sample_sq_grad_norms(self, w, x, y):
        """Closed form: layer l contributes (1 + ||a_{l-1}||^2) ||delta_l||^2.

        The L2 cross term uses <g_data, w> = sum_l delta_l . z_l, which holds
        because each layer's weight gradient is the outer product
        a_{l-1} delta_l^T and z_l = a_{l-1} W_l + b_l.
        """
        w, x, y = self._prep(w, x, y)
        (z1, a1, z2, a2, z3), (d1, d2, d3) = self._backward(w, x, y)
        out = np.zeros(x.shape[0])
        for a_prev, d in ((x, d1), (a1, d2), (a2, d3)):
            out += (1.0 + np.einsum("mi,mi->m", a_prev, a_prev)) * np.einsum("mo,mo->m", d, d)
        if self.l2:
            cross = sum(np.einsum("mo,mo->m", d, z) for d, z in ((d1, z1), (d2, z2), (d3, z3)))
            out += 2.0 * self.l2 * cross + self.l2**2 * float(w @ w)
        return out

    def hvp(self, w, x, y, v):
        w, x, y = self._prep(w, x, y)
        v = _as_float_params(v, self.dim)
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0.0:
            return np.zeros(self.dim)
        h = self.hvp_step
        unit = v / vnorm
        gp = self.batch_mean_grad(w + h * unit, x, y)
        gm = self.batch_mean_grad(w - h * unit, x, y)
        return (gp - gm) * (vnorm / (2.0 * h))

    def predict(self, w, x):
        w = _as_float_params(w, self.dim)
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self._forward(w, x)[-1].argmax(axis=1)


# -- module-level operations --------------------------------------------------


def per_sample_loss(model: Model, w: Array, sample) -> float:
    """Training objective of one sample (penalty included)."""
    x = np.asarray(sample.x, dtype=np.float64)[None, :]
    y = np.atleast_1d(np.asarray(sample.y))
    return float(model.per_sample_losses(w, x, y)[0])


def per_sample_grad(model: Model, w: Array, sample) -> Array:
    x = np.asarray(sample.x, dtype=np.float64)[None, :]
    y = np.atleast_1d(np.asarray(sample.y))
    return model.per_sample_grads(w, x, y)[0]


def batch_grad(model: Model, w: Array, x: Array, y: Array) -> Array:
    """Arithmetic mean of the per-sample gradients over the batch.

    The reduction runs over a fixed (index) order through numpy, so repeated
    calls on the same inputs are bit-identical.
    """
    return model.batch_mean_grad(w, x, y)


def hvp(model: Model, w: Array, x: Array, y: Array, v: Array) -> Array:
    """Hessian-vector product of the batch-mean objective at ``w``."""
    v = np.asarray(v, dtype=np.float64)
    if np.linalg.norm(v) == 0.0:
        return np.zeros(model.dim)
    return model.hvp(w, x, y, v)


class LambdaMaxResult(NamedTuple):
    value: float
    converged: bool


def lambda_max(model: Model, w: Array, x: Array, y: Array,
               iters: int = 200, tol: float = 1e-9, seed: int = 0) -> LambdaMaxResult:
    """Power-iteration estimate of the largest-magnitude Hessian eigenvalue.

    Converged when successive Rayleigh quotients differ by at most ``tol``.
    On a zero product the curvature along the current direction vanished;
    returns 0 as converged. If the budget runs out the last estimate is
    returned with ``converged=False``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(model.dim)
    v /= np.linalg.norm(v)
    rayleigh = np.inf
    for _ in range(iters):
        hv = model.hvp(w, x, y, v)
        norm = float(np.linalg.norm(hv))
        if norm < 1e-300:
            return LambdaMaxResult(0.0, True)
        current = float(v @ hv)
        if abs(current - rayleigh) <= tol:
            return LambdaMaxResult(abs(current), True)
        rayleigh = current
        v = hv / norm
    return LambdaMaxResult(abs(rayleigh), False)


def check_grad_fd(model: Model, w: Array, sample, step: float = 1e-5) -> float:
    """Largest analytic-vs-central-difference gradient deviation.

    Returns ``max_j |g_j - fd_j|`` normalized by the larger of the two
    gradients' infinity norms (floored at 1e-12 so an exactly-zero gradient
    does not divide by zero).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(sample.x, dtype=np.float64)[None, :]
    y = np.atleast_1d(np.asarray(sample.y))
    g = model.per_sample_grads(w, x, y)[0]
    fd = np.empty_like(g)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = step
        up = float(model.per_sample_losses(w + e, x, y)[0])
        dn = float(model.per_sample_losses(w - e, x, y)[0])
        fd[j] = (up - dn) / (2.0 * step)
    scale = max(float(np.abs(g).max()), float(np.abs(fd).max()), 1e-12)
    return float(np.abs(g - fd).max()) / scale
