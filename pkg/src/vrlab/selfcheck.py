"""Built-in oracle suite behind ``vrlab check``: fast, dependency-free
re-derivations of the package's key numerical contracts."""

from __future__ import annotations

import tempfile

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import models as models_mod
from . import optim as optim_mod
from .config import parse_config_text
from .harness import budget_matched_epochs, run_experiment, write_results


def _fd_checks():
    rng = np.random.default_rng(11)
    quad = models_mod.MeanQuadratic(np.diag([1.0, 3.0, 0.5]))
    logi = models_mod.LogisticRegression(4, 3, l2=1e-3)
    mlp = models_mod.TwoLayerMLP(3, hidden=6, classes=3, l2=1e-3)
    worst = {"quadratic": 0.0, "logistic": 0.0, "mlp": 0.0}
    for name, model, din in (("quadratic", quad, 3), ("logistic", logi, 4), ("mlp", mlp, 3)):
        for _ in range(10):
            w = rng.standard_normal(model.dim)
            y = 0.0 if name == "quadratic" else int(rng.integers(0, 3))
            s = data_mod.Sample(rng.standard_normal(din), y)
            worst[name] = max(worst[name], models_mod.check_grad_fd(model, w, s))
    ok = worst["quadratic"] <= 1e-8 and worst["logistic"] <= 1e-5 and worst["mlp"] <= 1e-5
    return ok, f"max rel err quad {worst['quadratic']:.1e} logi {worst['logistic']:.1e} mlp {worst['mlp']:.1e}"


def _eig_check():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((5, 5))
    a = m @ m.T
    model = models_mod.MeanQuadratic(a)
    est = models_mod.lambda_max(model, np.zeros(5), np.zeros((1, 5)), np.zeros(1),
                                iters=500, tol=1e-13)
    truth = float(np.abs(np.linalg.eigvalsh(a)).max())
    err = abs(est.value - truth) / truth
    return est.converged and err <= 1e-6, f"rel err {err:.1e}"


def _degeneration_check():
    blob = data_mod.gen_blobs(40, 3, classes=2, separation=2.0, seed=5)
    model = models_mod.LogisticRegression(3, 2)
    w0 = model.init_params(np.random.default_rng(9))
    worst = 0.0
    for b in (1, 8):
        states = [optim_mod.init_state(m, w0) for m in ("bsvrg", "bpsvrg", "sgd")]
        rngs = [np.random.default_rng(7) for _ in range(3)]
        for _ in range(50):
            plans = [data_mod.sample_outer_batch(blob, b, b, r) for r in rngs]
            optim_mod.svrg_outer_iteration(states[0], model, blob, plans[0], 0.05, "minus")
            optim_mod.svrg_outer_iteration(states[1], model, blob, plans[1], 0.05, "plus")
            optim_mod.sgd_step(states[2], model, blob.x[plans[2].indices],
                               blob.y[plans[2].indices], 0.05)
            worst = max(worst, float(np.abs(states[0].w - states[2].w).max()),
                        float(np.abs(states[1].w - states[2].w).max()))
    return worst <= 1e-12, f"max coordinate diff {worst:.1e}"


def _cancellation_check():
    ds, model = data_mod.gen_quadratic_family(24, 4, np.linspace(1, 2, 4), seed=3)
    plan = data_mod.BatchPlan(np.arange(24), inner_size=6)
    st = optim_mod.init_state("bsvrg", model.init_params(np.random.default_rng(2)))
    log: list = []
    w = st.w.copy()
    optim_mod.svrg_outer_iteration(st, model, ds, plan, 0.02, "minus", term_log=log)
    worst = 0.0
    for term in log:
        full = models_mod.batch_grad(model, w, ds.x[plan.indices], ds.y[plan.indices])
        worst = max(worst, float(np.abs(term - full).max()))
        w = w - 0.02 * term
    return worst <= 1e-12, f"max |inner term - outer-batch grad| {worst:.1e}"


def _schedule_check():
    s = optim_mod.Schedule(0.5, 100, (0.4, 0.6, 0.8), 5)
    got = (optim_mod.lr_at_epoch(s, 39), optim_mod.lr_at_epoch(s, 40), optim_mod.lr_at_epoch(s, 85))
    ok = got == (0.5, 0.1, 0.004)
    ok &= budget_matched_epochs(1, "nag") == 2 and budget_matched_epochs(100, "bpsvrg") == 100
    ok &= optim_mod.grad_evals_for("bsvrg", 4, 2, caching=False) == 12
    ok &= optim_mod.grad_evals_for("bsvrg", 4, 2, caching=True) == 8
    ok &= optim_mod.grad_evals_for("sgd", 4, 2) == 4
    return ok, f"lr steps {got}"


def _sharpness_check():
    model = models_mod.MeanQuadratic(np.diag([1.0, 4.0]))
    origin = data_mod.Dataset(np.zeros((1, 2)), np.zeros(1))
    est = metrics_mod.gaussian_sharpness(model, np.zeros(2), origin, sigma=0.01,
                                         draws=40000, seed=3)
    target = 0.5 * 0.01 * 5.0
    ok = abs(est.value - target) <= 3 * est.std_error

    family = data_mod.Dataset(np.array([[1.0], [3.0]]), np.zeros(2))
    line = models_mod.MeanQuadratic(np.array([[1.0]]))
    ok &= abs(metrics_mod.data_relevant_sharpness(line, np.zeros(1), family, 0.1) - 0.05) < 1e-12
    bound = metrics_mod.sharpness_upper_bound(line, np.zeros(1), family, 0.1)
    ok &= bound.converged and bound.value + 1e-12 >= 0.05
    return ok, f"mc {est.value:.5f} (target {target}) within 3 se {est.std_error:.1e}"


def _bound_check():
    rng = np.random.default_rng(17)
    violations = 0
    for _ in range(25):
        d = int(rng.integers(1, 4))
        m = rng.standard_normal((d, d))
        model = models_mod.MeanQuadratic(m @ m.T + 0.3 * np.eye(d))
        n_tr = int(rng.integers(2, 8))
        n_pop = int(rng.integers(n_tr, 20))
        train = data_mod.Dataset(rng.normal(0, 2, (n_tr, d)), np.zeros(n_tr), "train")
        pop = data_mod.Dataset(rng.normal(0, 2, (n_pop, d)), np.zeros(n_pop), "population")
        w = rng.standard_normal(d)
        rep = metrics_mod.generalization_bound_check(model, w, train, pop,
                                                     pl_mu=model.pl_mu, form="exact")
        violations += not rep.holds
    return violations == 0, f"{violations} violations over 25 draws"


def _determinism_check():
    text = """
[experiment]
epochs = 3
seeds = 1 2
out = unused
[dataset]
kind = blobs
n = 60
dim = 3
classes = 2
separation = 2.5
seed = 4
train_fraction = 0.8
[model]
kind = logistic
[method bsvrg]
method = bsvrg
lr = 0.2
inner_batch = 4
"""
    cfg = parse_config_text(text)
    outputs = []
    for _ in range(2):
        result = run_experiment(cfg)
        with tempfile.TemporaryDirectory() as tmp:
            out = write_results(result, tmp)
            blobs = b"".join(sorted(p.read_bytes() for p in out.glob("*.csv")))
        outputs.append(blobs)
    return outputs[0] == outputs[1], "rerun CSV bytes identical"


CHECKS = (
    ("analytic gradients vs central differences", _fd_checks),
    ("power iteration vs dense eigenvalues", _eig_check),
    ("outer batch = slice degenerates to sgd", _degeneration_check),
    ("full-set quadratic variance cancellation", _cancellation_check),
    ("schedules and budget accounting", _schedule_check),
    ("sharpness closed forms", _sharpness_check),
    ("generalization bound (exact form)", _bound_check),
    ("rerun determinism", _determinism_check),
)


def run_selfcheck(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok &= ok
        out(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
