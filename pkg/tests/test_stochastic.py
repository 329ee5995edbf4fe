import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from descent_forge.core import CapabilityError, Oracle, ParameterError, Problem, StopRule
from descent_forge.first_order import GDConfig, gradient_descent
from descent_forge.linesearch import StepRule
from descent_forge.problems import make_problem, synthetic_dataset
from descent_forge.stochastic import (
    BatchPlan,
    SagTable,
    Schedule,
    StochConfig,
    adaptive_sgd,
    full_gradient,
    make_rng,
    minibatch_sgd,
    sag,
    sample_batches,
    sgd,
    svrg,
)


def ls(n, d, seed=0):
    return make_problem("ls", synthetic_dataset(n, d, seed=seed))


def cfg(eta=0.1, kind="constant", iters=50, seed=0, **kw):
    return StochConfig(schedule=Schedule(kind, eta), stop=StopRule(grad_tol=0, max_iters=iters), seed=seed, **kw)


def test_batches_examples():
    b = sample_batches(BatchPlan(10, 3, seed=1))
    assert len(b) == 3 and len(set(np.concatenate(b))) == 9
    assert sorted(sample_batches(BatchPlan(4, 4))[0].tolist()) == [0, 1, 2, 3]
    p = BatchPlan(6, 2, seed=9)
    assert all(np.array_equal(u, v) for u, v in zip(sample_batches(p), sample_batches(p)))
    with pytest.raises(ParameterError):
        BatchPlan(3, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 1000), st.integers(0, 5))
def test_batches_disjoint_and_cover(n, b, seed, epoch):
    if b > n:
        return
    batches = sample_batches(BatchPlan(n, b, seed=seed), epoch)
    assert len(batches) == n // b
    flat = np.concatenate(batches)
    assert len(flat) == len(set(flat.tolist())) == b * (n // b)


def test_partial_batch_flag():
    batches = sample_batches(BatchPlan(10, 3, allow_partial=True))
    assert [len(x) for x in batches] == [3, 3, 3, 1]


def test_schedules():
    assert Schedule("inv_k", 1.0)(4) == 0.25
    assert Schedule("inv_sqrt_k", 2.0)(4) == 1.0
    assert Schedule("constant", 0.3)(99) == 0.3
    with pytest.raises(ParameterError):
        Schedule("cosine")


def test_sgd_single_term_is_gd():
    p = ls(1, 3)
    s = sgd(p, cfg(0.05, iters=20))
    g = gradient_descent(p, GDConfig(StepRule.fixed(0.05), stop=StopRule(grad_tol=0, max_iters=20)))
    assert np.allclose(s.x, g.x, rtol=0, atol=1e-15)
    assert all(r.extras["sampled_index"] == 0 for r in s.trace[1:])


def test_sgd_requires_term_gradients():
    p = Problem(Oracle(value=lambda x: 0.0, gradient=lambda x: x), 2)
    with pytest.raises(CapabilityError):
        sgd(p, cfg())


def test_sgd_deterministic_and_seed_sensitive():
    p = ls(40, 4)
    a, b, c = sgd(p, cfg(seed=3)), sgd(p, cfg(seed=3)), sgd(p, cfg(seed=4))
    assert [r.to_json(False) for r in a.trace] == [r.to_json(False) for r in b.trace]
    assert not np.array_equal(a.x, c.x)


def test_sgd_plateau_scales_with_step():
    p = ls(20, 3, seed=2)
    def mean_gap(eta):
        return np.mean([p.oracle.value(sgd(p, cfg(eta, iters=2000, seed=s)).x) - p.f_star for s in range(20)])
    big, small = mean_gap(0.05), mean_gap(0.005)
    assert big > 0 and small > 0
    # neighbourhood shrinks roughly tenfold with the step
    assert 3 < big / small < 30


def test_minibatch_full_batch_is_gd():
    p = ls(12, 3)
    m = minibatch_sgd(p, cfg(0.1, iters=15), BatchPlan(12, 12))
    g = gradient_descent(p, GDConfig(StepRule.fixed(0.1), stop=StopRule(grad_tol=0, max_iters=15)))
    assert np.allclose(m.x, g.x, rtol=0, atol=1e-14)
    assert all(r.extras["e_norm2"] < 1e-28 for r in m.trace[1:])


def test_sag_single_term_is_gd():
    p = ls(1, 3)
    s = sag(p, cfg(0.05, iters=20))
    g = gradient_descent(p, GDConfig(StepRule.fixed(0.05), stop=StopRule(grad_tol=0, max_iters=20)))
    assert np.allclose(s.x, g.x, rtol=0, atol=1e-15)


def test_sag_table_sum_after_sweep():
    p = ls(15, 4)
    x0, x = np.zeros(4), np.ones(4)
    t = SagTable(p.oracle, x0)
    for i in make_rng(0).permutation(15):
        t.refresh(int(i), x)
    assert np.allclose(t.sum, 15 * full_gradient(p.oracle, x), rtol=0, atol=1e-12)


def test_sag_beats_sgd_on_least_squares():
    p = ls(20, 3, seed=5)
    # SAG's safe step is set by the largest per-term constant max ||a_i||^2
    eta = 1.0 / (16 * np.max(np.sum(p.data.A ** 2, axis=1)))
    stop = StopRule(grad_tol=0, max_iters=4000)
    s = sag(p, StochConfig(schedule=Schedule("constant", eta), stop=stop, seed=1))
    g = sgd(p, StochConfig(schedule=Schedule("constant", eta), stop=stop, seed=1))
    gs = np.linalg.norm(p.oracle.gradient(s.x))
    assert gs <= 1e-6
    assert gs < np.linalg.norm(p.oracle.gradient(g.x))


def test_svrg_single_term_is_gd():
    p = ls(1, 2)
    r = svrg(p, cfg(0.1, iters=4, svrg_m=3))
    g = gradient_descent(p, GDConfig(StepRule.fixed(0.1), stop=StopRule(grad_tol=0, max_iters=10)))
    assert np.allclose(r.x, g.x, rtol=0, atol=1e-15)


def test_svrg_converges():
    p = ls(50, 5, seed=3)
    r = svrg(p, StochConfig(schedule=Schedule("constant", 0.1 / p.L), stop=StopRule(grad_tol=1e-8, max_iters=31),
                            seed=0))
    assert r.status == "converged" and r.iterations <= 30


def _single(g):
    return Problem(Oracle(value=lambda x: float(g @ x), gradient=lambda x: g.copy(), term_count=1,
                          term_value=lambda i, x: float(g @ x), term_gradient=lambda i, x: g.copy()), g.size)


def test_adagrad_first_step_is_sign():
    g = np.array([3.0, -4.0])
    r = adaptive_sgd(_single(g), cfg(0.1, iters=2, eps=0.0), "adagrad")
    assert np.allclose(r.x, -0.1 * np.array([1.0, -1.0]), rtol=0, atol=1e-15)


def test_adam_zero_gammas_match_rmsprop():
    p = ls(10, 3)
    a = adaptive_sgd(p, cfg(0.05, iters=30, gamma1=0.0, gamma2=0.0), "adam")
    r = adaptive_sgd(p, cfg(0.05, iters=30, gamma=0.0), "rmsprop")
    assert np.allclose(a.x, r.x, rtol=0, atol=1e-14)


def test_rmsprop_step_frozen():
    g = np.array([3.0, -4.0])
    # gamma = 0: v = ||g||^2 = 25, step = eta g / 5
    r = adaptive_sgd(_single(g), cfg(0.5, iters=2, gamma=0.0, eps=0.0), "rmsprop")
    assert np.allclose(r.x, -0.5 * g / 5.0, rtol=0, atol=1e-15)


def test_division_guard():
    r = adaptive_sgd(_single(np.zeros(2)), cfg(0.1, iters=3, eps=0.0), "adagrad")
    assert r.trace[1].extras["div_guard"] == 1.0
    assert np.array_equal(r.x, np.zeros(2))


def test_unknown_variant():
    with pytest.raises(ParameterError):
        adaptive_sgd(ls(3, 2), cfg(), "nadam")
