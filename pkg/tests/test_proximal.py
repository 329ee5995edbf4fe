import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from descent_forge.core import CapabilityError, Oracle, ParameterError, Problem, RankError, StopRule
from descent_forge.first_order import GDConfig, gradient_descent
from descent_forge.linesearch import StepRule
from descent_forge.linsolve import svd
from descent_forge.problems import lasso_problem
from descent_forge.proximal import (
    ProxGradConfig,
    ProxSpec,
    SetSpec,
    averaged_projections,
    frank_wolfe,
    lmo,
    moreau_check,
    pocs,
    project,
    projected_gradient,
    prox,
    proximal_gradient,
    proximal_point,
    soft_threshold,
)
from descent_forge.stochastic import make_rng

from conftest import quadratic

finite_vec = arrays(np.float64, 4, elements=st.floats(-50, 50))


def shifted_square(c):
    c = np.asarray(c, dtype=float)
    return Oracle(value=lambda x: 0.5 * float(np.sum((x - c) ** 2)), gradient=lambda x: x - c,
                  hessian=lambda x: np.eye(c.size), prox=lambda t, x: (np.asarray(x) + t * c) / (1 + t))


def test_prox_examples():
    assert np.array_equal(prox(ProxSpec.l1(1.0), [2.0, -0.5, 1.0]), [1.0, 0.0, 0.0])
    x = np.array([0.3, -7.0])
    assert np.array_equal(prox(ProxSpec.l1(0.0), x), x)
    assert np.allclose(prox(ProxSpec.l2(2.5), [3.0, 4.0]), [1.5, 2.0], rtol=0, atol=1e-15)
    assert np.array_equal(prox(ProxSpec.l2(10.0), [3.0, 4.0]), [0.0, 0.0])
    assert np.array_equal(prox(ProxSpec(), x), x)


def test_custom_prox_must_be_finite():
    from descent_forge.core import EvaluationError
    with pytest.raises(EvaluationError):
        prox(ProxSpec.custom(lambda t, x: np.full_like(x, np.nan)), np.ones(2))
    with pytest.raises(ParameterError):
        ProxSpec.l1(-1.0)


def test_project_examples():
    assert np.array_equal(project(SetSpec.box([-1, -1], [1, 1]), [2.0, -3.0]), [1.0, -1.0])
    A, b = np.array([[1.0, 2.0, 0.0]]), np.array([3.0])
    x = np.array([1.0, 1.0, 5.0])
    assert np.allclose(project(SetSpec.affine(A, b), x), x, rtol=0, atol=1e-14)
    Y = project(SetSpec.orthogonal_cone(1.0), 2 * np.eye(2))
    assert np.allclose(Y, np.eye(2), rtol=0, atol=1e-14)
    assert np.allclose(project(SetSpec.l2_ball([0, 0], 1.0), [3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)


def test_affine_projection_rank_error():
    with pytest.raises(RankError):
        project(SetSpec.affine([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0]), np.zeros(2))


def test_orthogonal_cone_singular_values():
    rng = make_rng(8)
    for lam in (1.0, 2.5):
        Y = project(SetSpec.orthogonal_cone(lam), rng.standard_normal((4, 3)))
        assert np.allclose(svd(Y).S, lam, rtol=0, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(finite_vec, finite_vec, st.floats(0.01, 5))
def test_prox_nonexpansive(x, y, lam):
    for spec in (ProxSpec.l1(lam), ProxSpec.l2(lam), ProxSpec.indicator(SetSpec.l2_ball(np.zeros(4), lam))):
        assert np.linalg.norm(prox(spec, x) - prox(spec, y)) <= np.linalg.norm(x - y) + 1e-12


@settings(max_examples=60, deadline=None)
@given(finite_vec)
def test_projection_idempotent(x):
    rng = make_rng(2)
    sets = [SetSpec.box(-np.ones(4), np.ones(4)), SetSpec.l2_ball(np.ones(4), 2.0),
            SetSpec.affine(rng.standard_normal((2, 4)), rng.standard_normal(2))]
    for s in sets:
        p = project(s, x)
        assert np.allclose(project(s, p), p, rtol=0, atol=1e-12 * (1 + np.linalg.norm(x)))
    X = np.reshape(np.concatenate([x, x[:2]]), (3, 2))
    if svd(X).S.size == 2 and svd(X).S[-1] > 1e-6:
        P = project(SetSpec.orthogonal_cone(), X)
        assert np.allclose(project(SetSpec.orthogonal_cone(), P), P, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(finite_vec, st.floats(0.01, 10))
def test_moreau_decomposition(x, lam):
    assert moreau_check(ProxSpec.l1(1.0), SetSpec.box(-np.ones(4), np.ones(4)), x, lam) <= 1e-12
    assert moreau_check(ProxSpec.l2(1.0), SetSpec.l2_ball(np.zeros(4), 1.0), x, lam) <= 1e-12


def test_moreau_examples():
    ball = SetSpec.l2_ball(np.zeros(2), 1.0)
    assert moreau_check(ProxSpec.l2(1.0), ball, np.zeros(2), 1.0) == 0.0
    assert moreau_check(ProxSpec.l2(1.0), ball, np.array([3.0, 4.0]), 2.5) <= 1e-12


def test_proximal_point_l1():
    o = Oracle(value=lambda x: float(np.sum(np.abs(x))), prox=lambda t, x: soft_threshold(x, t))
    rep = proximal_point(o, [2.0, -0.5], 1.0, StopRule(grad_tol=1e-15, max_iters=10))
    # [2, -0.5] -> [1, 0] -> [0, 0]
    assert np.array_equal(rep.x, [0.0, 0.0]) and rep.iterations == 2


def test_proximal_point_quadratic_halves_distance():
    c = np.array([1.0, -2.0])
    rep = proximal_point(shifted_square(c), np.zeros(2), 1.0, StopRule(grad_tol=0, max_iters=4))
    # x_k = c (1 - 2^-k)
    assert np.allclose(rep.x, c * (1 - 0.5 ** 3), rtol=0, atol=1e-15)


def test_proximal_point_identity_and_capability():
    zero = Oracle(value=lambda x: 0.0, prox=lambda t, x: np.array(x))
    rep = proximal_point(zero, [3.0, 1.0], 1.0)
    assert np.array_equal(rep.x, [3.0, 1.0]) and rep.status == "converged"
    with pytest.raises(CapabilityError):
        proximal_point(Oracle(value=lambda x: 0.0), [1.0], 1.0)


def test_prox_grad_zero_reg_is_gd():
    o = quadratic([[3.0, 1.0], [1.0, 2.0]], [1.0, -1.0])
    p = Problem(o, 2, L=4.0)
    stop = StopRule(grad_tol=0, max_iters=20)
    a = proximal_gradient(p, ProxSpec(), [1.0, 1.0], ProxGradConfig(StepRule.fixed(0.2), stop=stop))
    b = gradient_descent(p, GDConfig(StepRule.fixed(0.2), stop=stop), [1.0, 1.0])
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-15)


def test_orthonormal_lasso_one_step():
    y = np.array([3.0, -0.2, 0.7, -1.5])
    p = lasso_problem(np.eye(4), y, 0.5)
    rep = proximal_gradient(p, x0=np.zeros(4), config=ProxGradConfig(StepRule.fixed(1.0),
                                                                       stop=StopRule(grad_tol=1e-12)))
    assert rep.iterations == 1
    assert np.array_equal(rep.x, soft_threshold(y, 0.5))


def test_indicator_matches_projected_gradient():
    o = shifted_square([2.0, 0.0])
    p = Problem(o, 2, L=1.0)
    ball = SetSpec.l2_ball(np.zeros(2), 1.0)
    cfg = ProxGradConfig(StepRule.fixed(0.5), stop=StopRule(grad_tol=1e-12))
    a = proximal_gradient(p, ProxSpec.indicator(ball), [0.0, 0.5], cfg)
    b = projected_gradient(p, ball, [0.0, 0.5], cfg)
    assert [r.f for r in a.trace] == [r.f for r in b.trace]
    assert np.allclose(b.x, [1.0, 0.0], rtol=0, atol=1e-10)
    assert np.linalg.norm(b.x) <= 1 + 1e-10


def test_projected_gradient_inactive_set_is_gd():
    o = shifted_square([0.2, 0.1])
    p = Problem(o, 2, L=1.0)
    stop = StopRule(grad_tol=0, max_iters=15)
    a = projected_gradient(p, SetSpec.box([-1, -1], [1, 1]), [0.5, 0.5], ProxGradConfig(StepRule.fixed(0.5), stop=stop))
    b = gradient_descent(p, GDConfig(StepRule.fixed(0.5), stop=stop), [0.5, 0.5])
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-15)


def test_two_step_gamma_one_is_default():
    o = shifted_square([2.0, 1.0])
    p = Problem(o, 2, L=1.0)
    box = SetSpec.box([0, 0], [1, 1])
    stop = StopRule(grad_tol=0, max_iters=10)
    a = projected_gradient(p, box, [0.0, 0.0], ProxGradConfig(StepRule.fixed(0.5), 1.0, stop))
    b = projected_gradient(p, box, [0.0, 0.0], ProxGradConfig(StepRule.fixed(0.5), stop=stop))
    assert np.array_equal(a.x, b.x)
    with pytest.raises(ParameterError):
        projected_gradient(p, box, [0.0, 0.0], ProxGradConfig(gamma=1.5))


def test_composite_objective_monotone():
    rng = make_rng(4)
    X, y = rng.standard_normal((40, 10)), rng.standard_normal(40)
    p = lasso_problem(X, y, 2.0)
    rep = proximal_gradient(p, config=ProxGradConfig(stop=StopRule(grad_tol=1e-9, max_iters=3000)))
    fs = [r.f for r in rep.trace]
    assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))


def test_pocs_examples():
    h1 = SetSpec.custom(lambda x: np.array([max(x[0], 0.0), x[1]]))
    h2 = SetSpec.custom(lambda x: np.array([x[0], max(x[1], 0.0)]))
    rep = pocs([h1, h2], [-1.0, -1.0], StopRule(grad_tol=1e-14, max_iters=10))
    assert np.array_equal(rep.x, [0.0, 0.0]) and rep.iterations == 1
    one = pocs([SetSpec.box([0.0], [1.0])], [5.0], StopRule(grad_tol=1e-14, max_iters=10))
    assert one.x[0] == 1.0 and one.iterations == 1
    with pytest.raises(ParameterError):
        pocs([], [0.0])


def test_pocs_disjoint_balls_no_convergence():
    a = SetSpec.l2_ball([3.0, 0.0], 1.0)
    b = SetSpec.l2_ball([-3.0, 0.0], 1.0)
    rep = pocs([a, b], [0.0, 1.0], StopRule(grad_tol=1e-10, max_iters=20))
    assert rep.status == "no_convergence"
    assert np.allclose(rep.x, [2.0, 0.0], atol=1e-6)


def test_averaged_projections():
    h1 = SetSpec.custom(lambda x: np.array([max(x[0], 0.0), x[1]]))
    h2 = SetSpec.custom(lambda x: np.array([x[0], max(x[1], 0.0)]))
    first = averaged_projections([h1, h2], [-1.0, -1.0], StopRule(grad_tol=0, max_iters=2))
    assert np.array_equal(first.x, [-0.5, -0.5])
    lim = averaged_projections([h1, h2], [-1.0, -1.0], StopRule(grad_tol=1e-10, max_iters=200))
    assert np.allclose(lim.x, 0.0, atol=1e-10)
    box = SetSpec.box([0.0], [1.0])
    s = StopRule(grad_tol=1e-14, max_iters=5)
    assert np.array_equal(averaged_projections([box], [3.0], s).x, pocs([box], [3.0], s).x)
    fixed = averaged_projections([h1, h2], [1.0, 2.0], s)
    assert np.array_equal(fixed.x, [1.0, 2.0]) and fixed.iterations == 0


def test_frank_wolfe_linear_box():
    c = np.array([1.0, -2.0])
    p = Problem(Oracle(value=lambda x: float(c @ x), gradient=lambda x: c.copy()), 2)
    box = SetSpec.box([-1, -1], [1, 1])
    rep = frank_wolfe(p, [0.0, 0.0], stop=StopRule(grad_tol=1e-12, max_iters=5), s=box)
    assert np.array_equal(rep.x, [-1.0, 1.0]) and rep.iterations == 1
    opt = frank_wolfe(p, [-1.0, 1.0], stop=StopRule(grad_tol=1e-12, max_iters=5), s=box)
    assert opt.iterations == 0 and opt.trace[0].extras["fw_gap"] == 0.0
    with pytest.raises(CapabilityError):
        frank_wolfe(p, [0.0, 0.0])


def test_frank_wolfe_ball_gap():
    c = np.array([2.0, 1.0])
    p = Problem(shifted_square(c), 2, L=1.0)
    ball = SetSpec.l2_ball(np.zeros(2), 1.0)
    rep = frank_wolfe(p, [0.0, 0.0], stop=StopRule(grad_tol=0, max_iters=10_000), s=ball)
    ref = projected_gradient(p, ball, config=ProxGradConfig(StepRule.fixed(1.0), stop=StopRule(grad_tol=1e-13)))
    assert p.oracle.value(rep.x) - p.oracle.value(ref.x) <= 1e-4
    assert np.all([np.linalg.norm(rep.x) <= 1 + 1e-12])


def test_box_lmo_sign_rule():
    box = SetSpec.box([-1, 0], [2, 5])
    assert np.array_equal(lmo(box, np.array([1.0, -3.0])), [-1.0, 5.0])
