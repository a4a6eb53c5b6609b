import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrlab import (
    BatchPlan,
    Dataset,
    MeanQuadratic,
    Schedule,
    gen_quadratic_family,
    grad_evals_for,
    init_state,
    lr_at_epoch,
    modified_sgd_outer_iteration,
    sample_outer_batch,
    sgd_step,
    svrg_outer_iteration,
)


def quad_task(n=40, dim=3, seed=0, spread=1.0):
    return gen_quadratic_family(n, dim, np.linspace(1.0, 2.0, dim), center_spread=spread, seed=seed)


# -- schedules --------------------------------------------------------------------


def test_schedule_three_drop_anchor():
    sched = Schedule(0.5, 100, milestones=(0.4, 0.6, 0.8), factor=5.0)
    assert lr_at_epoch(sched, 0) == 0.5
    assert lr_at_epoch(sched, 39) == 0.5
    assert lr_at_epoch(sched, 40) == pytest.approx(0.1)
    assert lr_at_epoch(sched, 59) == pytest.approx(0.1)
    assert lr_at_epoch(sched, 60) == pytest.approx(0.02)
    assert lr_at_epoch(sched, 85) == pytest.approx(0.004)
    assert lr_at_epoch(sched, 99) == pytest.approx(0.004)


def test_schedule_two_drop_anchor():
    sched = Schedule(0.1, 40, milestones=(0.5, 0.75), factor=10.0)
    assert lr_at_epoch(sched, 30) == pytest.approx(0.001)
    assert lr_at_epoch(sched, 19) == pytest.approx(0.1)
    assert lr_at_epoch(sched, 20) == pytest.approx(0.01)


def test_schedule_milestone_boundary_fp_guard():
    # 0.4 * 100 floats to 40.000000000000006; a naive ceiling would fire at 41
    sched = Schedule(1.0, 100, milestones=(0.4,), factor=2.0)
    assert lr_at_epoch(sched, 39) == 1.0
    assert lr_at_epoch(sched, 40) == 0.5


def test_schedule_constant_without_milestones():
    sched = Schedule(0.3, 10)
    assert all(lr_at_epoch(sched, e) == 0.3 for e in range(10))


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(0.0, 10)
    with pytest.raises(ValueError):
        Schedule(0.1, 0)
    with pytest.raises(ValueError):
        Schedule(0.1, 10, milestones=(0.5, 0.5))
    with pytest.raises(ValueError):
        Schedule(0.1, 10, milestones=(0.8, 0.5))
    with pytest.raises(ValueError):
        Schedule(0.1, 10, milestones=(1.2,))
    with pytest.raises(ValueError):
        Schedule(0.1, 10, milestones=(0.5,), factor=1.0)
    with pytest.raises(ValueError):
        lr_at_epoch(Schedule(0.1, 10), 10)
    with pytest.raises(ValueError):
        lr_at_epoch(Schedule(0.1, 10), -1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200),
       st.lists(st.floats(0.01, 0.99), max_size=4, unique=True),
       st.floats(1.5, 20.0))
def test_schedule_nonincreasing_with_exact_drop_count(total, fracs, factor):
    sched = Schedule(1.0, total, milestones=tuple(sorted(fracs)), factor=factor)
    lrs = [lr_at_epoch(sched, e) for e in range(total)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    drops = sum(1 for a, b in zip(lrs, lrs[1:]) if a > b)
    # milestones can collide on the same epoch or land at epoch 0/T
    assert drops <= len(fracs)
    assert min(lrs) >= 1.0 / factor ** len(fracs) * (1 - 1e-12)


# -- plain sgd steps ----------------------------------------------------------------


def test_sgd_step_anchor():
    # single bowl at 0.5 with unit curvature gives gradient 0.5 at w=1
    model = MeanQuadratic(1.0, dim=1)
    state = init_state("sgd", np.array([1.0]))
    sgd_step(state, model, np.array([[0.5]]), np.zeros(1), lr=0.1)
    assert state.w[0] == pytest.approx(0.95)
    assert state.grad_evals == 1


def test_heavy_ball_anchor():
    model = MeanQuadratic(1.0, dim=1)
    state = init_state("momentum", np.array([0.0]))
    # centre at -1: gradient at 0 is +1
    sgd_step(state, model, np.array([[-1.0]]), np.zeros(1), lr=0.1, momentum=0.9)
    assert state.velocity[0] == pytest.approx(1.0)
    assert state.w[0] == pytest.approx(-0.1)


def test_nesterov_anchor():
    model = MeanQuadratic(1.0, dim=1)
    state = init_state("nag", np.array([0.0]))
    sgd_step(state, model, np.array([[-1.0]]), np.zeros(1), lr=0.1,
             momentum=0.9, nesterov=True)
    # v = 1, update = g + m v = 1.9
    assert state.w[0] == pytest.approx(-0.19)


def test_sgd_step_validation():
    model = MeanQuadratic(1.0, dim=1)
    state = init_state("sgd", np.zeros(1))
    with pytest.raises(ValueError):
        sgd_step(state, model, np.zeros((1, 1)), np.zeros(1), lr=0.0)
    with pytest.raises(ValueError):
        sgd_step(state, model, np.zeros((1, 1)), np.zeros(1), lr=0.1, momentum=1.0)


def test_init_state_velocity_allocation():
    assert init_state("sgd", np.zeros(2)).velocity is None
    assert init_state("bsvrg", np.zeros(2)).velocity is None
    assert init_state("momentum", np.zeros(2)).velocity is not None
    assert init_state("nag", np.zeros(2)).velocity is not None
    with pytest.raises(ValueError):
        init_state("adam", np.zeros(2))


def test_init_state_copies_w0():
    w0 = np.zeros(2)
    state = init_state("sgd", w0)
    state.w += 1.0
    np.testing.assert_array_equal(w0, np.zeros(2))


# -- svrg outer iterations -------------------------------------------------------------


def svrg_trace(variant, lr=0.1):
    """The two-bowl 1-d task walked from w=0, slice order centre 1 then 3."""
    model = MeanQuadratic(1.0, dim=1)
    data = Dataset(np.array([[1.0], [3.0]]), np.zeros(2))
    plan = BatchPlan(np.array([0, 1]), 1)
    method = "bsvrg" if variant == "minus" else "bpsvrg"
    state = init_state(method, np.zeros(1))
    terms = []
    svrg_outer_iteration(state, model, data, plan, lr, variant, term_log=terms)
    return state, [float(t[0]) for t in terms]


def test_svrg_minus_hand_trace():
    state, terms = svrg_trace("minus")
    # mu = mean(-1, -3) = -2; steps walk 0 -> 0.2 -> 0.38
    np.testing.assert_allclose(state.snapshot_grad, [-2.0])
    assert terms == pytest.approx([-2.0, -1.8])
    assert state.w[0] == pytest.approx(0.38)
    np.testing.assert_array_equal(state.snapshot, [0.0])


def test_svrg_plus_hand_trace():
    state, terms = svrg_trace("plus")
    assert terms == pytest.approx([0.0, -4.0])
    assert state.w[0] == pytest.approx(0.4)


def test_svrg_first_step_identities():
    # at the first inner step the current and snapshot slice gradients coincide,
    # so the minus term collapses to mu and the plus term to 2 g_snap - mu
    # (up to the two roundings of the term's own arithmetic)
    data, model = quad_task(n=30, dim=4, seed=2)
    rng = np.random.default_rng(0)
    plan = sample_outer_batch(data, 12, 4, rng)

    for method, variant in (("bsvrg", "minus"), ("bpsvrg", "plus")):
        state = init_state(method, np.zeros(4))
        terms = []
        svrg_outer_iteration(state, model, data, plan, 0.01, variant, term_log=terms)
        mu = state.snapshot_grad
        first = plan.indices[:4]
        g_snap = model.batch_mean_grad(np.zeros(4), data.x[first], data.y[first])
        want = mu if variant == "minus" else 2.0 * g_snap - mu
        np.testing.assert_allclose(terms[0], want, rtol=0, atol=5e-15)


def test_svrg_degenerates_to_sgd_when_outer_equals_inner():
    # B=b collapses both variants onto plain SGD, bitwise
    data, model = quad_task(n=60, dim=5, seed=3)
    for method, variant in (("bsvrg", "minus"), ("bpsvrg", "plus")):
        for b in (1, 4):
            rng_v = np.random.default_rng(7)
            rng_s = np.random.default_rng(7)
            sv = init_state(method, np.ones(5))
            sg = init_state("sgd", np.ones(5))
            for _ in range(50):
                plan = sample_outer_batch(data, b, b, rng_v)
                svrg_outer_iteration(sv, model, data, plan, 0.05, variant)
                plan2 = sample_outer_batch(data, b, b, rng_s)
                xs, ys = data.x[plan2.indices], data.y[plan2.indices]
                sgd_step(sg, model, xs, ys, lr=0.05)
            assert np.array_equal(sv.w, sg.w)


def test_svrg_variance_fully_cancelled_on_shared_curvature():
    # g_slice(w) - g_slice(w_snap) = A (w - w_snap) for every slice, so each
    # minus-variant term equals the outer-batch mean gradient at the current w
    data, model = quad_task(n=50, dim=4, seed=4)
    rng = np.random.default_rng(1)
    plan = sample_outer_batch(data, 20, 5, rng)
    state = init_state("bsvrg", np.full(4, 0.7))
    terms = []
    svrg_outer_iteration(state, model, data, plan, 0.1, "minus", term_log=terms)

    xs, ys = data.x[plan.indices], data.y[plan.indices]
    w = np.full(4, 0.7)
    for term in terms:
        full = model.batch_mean_grad(w, xs, ys)
        np.testing.assert_allclose(term, full, rtol=0, atol=1e-12)
        w = w - 0.1 * term


def test_svrg_zero_mean_control_variate():
    # slice snapshot gradients average to mu when the slices tile the batch
    data, model = quad_task(n=48, dim=3, seed=5)
    rng = np.random.default_rng(2)
    plan = sample_outer_batch(data, 24, 6, rng)  # 6 | 24
    w = rng.standard_normal(3)
    b = plan.inner_size
    xs, ys = data.x[plan.indices], data.y[plan.indices]
    gs = [model.batch_mean_grad(w, xs[t * b:(t + 1) * b], ys[t * b:(t + 1) * b])
          for t in range(plan.slice_count)]
    mu = model.batch_mean_grad(w, xs, ys)
    cv = np.mean([g - mu for g in gs], axis=0)
    np.testing.assert_allclose(cv, 0.0, atol=1e-13)


def test_svrg_trailing_samples_enter_mu_but_not_slices():
    # outer 5, inner 2: slices cover positions 0..3, position 4 only feeds mu
    model = MeanQuadratic(1.0, dim=1)
    data = Dataset(np.array([[0.0], [0.0], [0.0], [0.0], [10.0]]), np.zeros(5))
    plan = BatchPlan(np.arange(5), 2)
    state = init_state("bsvrg", np.zeros(1))
    terms = []
    svrg_outer_iteration(state, model, data, plan, 0.0001, "minus", term_log=terms)
    # mu = (4*0 + 1*(-10)) / 5 = -2 at w=0
    np.testing.assert_allclose(state.snapshot_grad, [-2.0])
    assert len(terms) == 2
    assert state.grad_evals == 5 + 2 * 2


def test_svrg_caching_changes_counts_not_iterates():
    data, model = quad_task(n=40, dim=3, seed=6)
    rng_a = np.random.default_rng(3)
    rng_b = np.random.default_rng(3)
    a = init_state("bsvrg", np.ones(3))
    b = init_state("bsvrg", np.ones(3))
    for _ in range(5):
        plan_a = sample_outer_batch(data, 16, 4, rng_a)
        plan_b = sample_outer_batch(data, 16, 4, rng_b)
        svrg_outer_iteration(a, model, data, plan_a, 0.05, "minus", caching=True)
        svrg_outer_iteration(b, model, data, plan_b, 0.05, "minus", caching=False)
    np.testing.assert_array_equal(a.w, b.w)
    assert a.grad_evals == 5 * (16 + 16)
    assert b.grad_evals == 5 * (16 + 32)


def test_svrg_validation():
    data, model = quad_task(n=10, dim=2, seed=7)
    plan = BatchPlan(np.arange(4), 2)
    state = init_state("bsvrg", np.zeros(2))
    with pytest.raises(ValueError):
        svrg_outer_iteration(state, model, data, plan, 0.1, "times")
    with pytest.raises(ValueError):
        svrg_outer_iteration(state, model, data, plan, 0.1, "plus")  # wrong sign for bsvrg
    with pytest.raises(ValueError):
        svrg_outer_iteration(state, model, data, plan, 0.0, "minus")
    sgd = init_state("sgd", np.zeros(2))
    with pytest.raises(ValueError):
        svrg_outer_iteration(sgd, model, data, plan, 0.1, "minus")


def test_svrg_snapshot_bookkeeping():
    data, model = quad_task(n=20, dim=2, seed=8)
    rng = np.random.default_rng(4)
    state = init_state("bpsvrg", np.zeros(2))
    assert state.snapshot is None and state.snapshot_grad is None
    w_before = state.w.copy()
    plan = sample_outer_batch(data, 8, 2, rng)
    svrg_outer_iteration(state, model, data, plan, 0.01, "plus")
    np.testing.assert_array_equal(state.snapshot, w_before)
    assert state.snapshot_grad is not None


# -- modified sgd -----------------------------------------------------------------------


def test_modified_sgd_matches_sequential_slice_sgd():
    data, model = quad_task(n=30, dim=3, seed=9)
    rng = np.random.default_rng(5)
    plan = sample_outer_batch(data, 12, 3, rng)

    state = init_state("modified_sgd", np.ones(3))
    modified_sgd_outer_iteration(state, model, data, plan, 0.05)

    ref = init_state("sgd", np.ones(3))
    b = plan.inner_size
    xs, ys = data.x[plan.indices], data.y[plan.indices]
    for t in range(plan.slice_count):
        sgd_step(ref, model, xs[t * b:(t + 1) * b], ys[t * b:(t + 1) * b], lr=0.05)
    np.testing.assert_array_equal(state.w, ref.w)


def test_modified_sgd_counts_loss_pass():
    data, model = quad_task(n=20, dim=2, seed=10)
    plan = BatchPlan(np.arange(4), 2)
    state = init_state("modified_sgd", np.zeros(2))
    modified_sgd_outer_iteration(state, model, data, plan, 0.05)
    assert state.grad_evals == 2 * 2 * 2  # loss pass + gradient pass, 2 slices of 2


def test_modified_sgd_descends_on_gentle_quadratic():
    data, model = quad_task(n=16, dim=2, seed=11)
    lr = 0.5 / model.lam_max_exact  # well under the 2 / lam_max stability edge
    state = init_state("modified_sgd", np.full(2, 3.0))
    plan = BatchPlan(np.arange(16), 4)
    before = model.objective(state.w, data.x, data.y)
    modified_sgd_outer_iteration(state, model, data, plan, lr)
    after = model.objective(state.w, data.x, data.y)
    assert after <= before


def test_modified_sgd_validation():
    data, model = quad_task(n=10, dim=2, seed=12)
    plan = BatchPlan(np.arange(4), 2)
    state = init_state("sgd", np.zeros(2))
    with pytest.raises(ValueError):
        modified_sgd_outer_iteration(state, model, data, plan, 0.1)


# -- evaluation counting ------------------------------------------------------------------


def test_grad_evals_for_anchors():
    assert grad_evals_for("bsvrg", 4, 2, caching=False) == 12
    assert grad_evals_for("bsvrg", 4, 2, caching=True) == 8
    assert grad_evals_for("sgd", 4, 2) == 4
    assert grad_evals_for("modified_sgd", 4, 2) == 8
    assert grad_evals_for("bpsvrg", 10, 3) == 10 + 9


def test_grad_evals_for_validation():
    with pytest.raises(ValueError):
        grad_evals_for("adam", 4, 2)
    with pytest.raises(ValueError):
        grad_evals_for("sgd", 2, 4)
    with pytest.raises(ValueError):
        grad_evals_for("sgd", 2, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200),
       st.sampled_from(["sgd", "momentum", "nag", "bsvrg", "bpsvrg", "modified_sgd"]))
def test_grad_evals_for_properties(outer, inner, method):
    if inner > outer:
        inner = outer
    cached = grad_evals_for(method, outer, inner, caching=True)
    uncached = grad_evals_for(method, outer, inner, caching=False)
    assert cached >= 1
    assert cached <= uncached
    if method not in ("bsvrg", "bpsvrg"):
        assert cached == uncached  # caching only touches the svrg family


def test_grad_evals_match_live_counter():
    data, model = quad_task(n=40, dim=3, seed=13)
    rng = np.random.default_rng(6)
    for method, variant in (("bsvrg", "minus"), ("bpsvrg", "plus")):
        for caching in (True, False):
            state = init_state(method, np.zeros(3))
            plan = sample_outer_batch(data, 17, 5, rng)
            svrg_outer_iteration(state, model, data, plan, 0.05, variant, caching=caching)
            assert state.grad_evals == grad_evals_for(method, 17, 5, caching=caching)
    state = init_state("modified_sgd", np.zeros(3))
    plan = sample_outer_batch(data, 17, 5, rng)
    modified_sgd_outer_iteration(state, model, data, plan, 0.05)
    assert state.grad_evals == grad_evals_for("modified_sgd", 17, 5)
