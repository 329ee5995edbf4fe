import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from descent_forge.core import Oracle, Problem, StopRule
from descent_forge.first_order import (
    AGMConfig,
    GDConfig,
    agm,
    gamma_condition_holds,
    gradient_descent,
    two_over_k_gamma,
)
from descent_forge.linesearch import StepRule
from descent_forge.problems import make_problem
from descent_forge.stochastic import make_rng

from conftest import quad_problem, quadratic, random_spd

FIXED_STOP = StopRule(grad_tol=0.0, max_iters=6)


def half_square_problem():
    return Problem(quadratic([[1.0]]), 1, L=1.0, mu=1.0)


def test_gd_halving_iterates():
    rep = gradient_descent(half_square_problem(), GDConfig(StepRule.fixed(0.5), stop=FIXED_STOP), [1.0])
    assert [r.f for r in rep.trace] == [0.5 * 0.25 ** k for k in range(6)]
    assert rep.x[0] == 0.5 ** 5
    assert rep.status == "max_iters"


def test_zero_momentum_equals_plain():
    p = make_problem("quadratic", seed=4, d=5)
    a = gradient_descent(p, GDConfig(StepRule.fixed(0.1), 0.0, StopRule(grad_tol=0, max_iters=30)))
    b = gradient_descent(p, GDConfig(StepRule.fixed(0.1), stop=StopRule(grad_tol=0, max_iters=30)))
    assert [r.f for r in a.trace] == [r.f for r in b.trace]


def test_momentum_recursion_by_hand():
    # f = x^2 / 2, alpha = 0.5, eta = 0.5: dx1 = -0.5, x1 = 0.5; dx2 = -0.25 - 0.25 = -0.5, x2 = 0
    rep = gradient_descent(half_square_problem(), GDConfig(StepRule.fixed(0.5), 0.5,
                                                           StopRule(grad_tol=0, max_iters=3)), [1.0])
    assert rep.x[0] == 0.0
    assert rep.trace[1].f == 0.125


def test_exact_step_matches_formula():
    rng = make_rng(3)
    A = random_spd(rng, 4, 20.0)
    b = rng.standard_normal(4)
    p = quad_problem(A, b)
    rep = gradient_descent(p, GDConfig(StepRule("exact_1d"), stop=StopRule(grad_tol=0, max_iters=4)), np.zeros(4))
    x = np.zeros(4)
    for rec in rep.trace[1:]:
        r = b - A @ x
        eta = (r @ r) / (r @ A @ r)
        assert rec.step == pytest.approx(eta, rel=1e-8)
        x = x + eta * r


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gd_diverges_with_large_step():
    p = Problem(quadratic([[1.0]]), 1)
    rep = gradient_descent(p, GDConfig(StepRule.fixed(1e154), stop=StopRule(max_iters=100)), [1.0])
    assert rep.status == "diverged"
    assert np.all(np.isfinite(rep.x))


def test_agm_with_zero_gamma_is_gd():
    p = make_problem("quadratic", seed=1, d=6)
    stop = StopRule(grad_tol=0, max_iters=25)
    a = agm(p, AGMConfig(lambda k: 0.0, StepRule.fixed(), stop))
    g = gradient_descent(p, GDConfig(StepRule.fixed(), stop=stop))
    assert np.array_equal(a.x, g.x)


def test_agm_two_over_k_sequence_prefix_equals_gd():
    stop = StopRule(grad_tol=0, max_iters=5)
    a = agm(half_square_problem(), AGMConfig("two_over_k", StepRule.fixed(0.5), stop), [1.0])
    g = gradient_descent(half_square_problem(), GDConfig(StepRule.fixed(0.5), stop=stop), [1.0])
    assert [r.f for r in a.trace] == [r.f for r in g.trace]


def test_gamma_condition():
    assert [two_over_k_gamma(k) for k in range(6)] == [0, 0, 0, 0, 0.5, 0.4]
    assert gamma_condition_holds(two_over_k_gamma, 1000)
    assert not gamma_condition_holds(lambda k: 0.9, 10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gd_sufficient_decrease(seed):
    rng = make_rng(seed)
    d = int(rng.integers(2, 8))
    p = quad_problem(random_spd(rng, d, 30.0), rng.standard_normal(d))
    eta = 0.99 / p.L
    rep = gradient_descent(p, GDConfig(StepRule.fixed(eta), stop=StopRule(grad_tol=0, max_iters=50)),
                           rng.standard_normal(d))
    for a, b in zip(rep.trace, rep.trace[1:]):
        # eta <= 1/L gives f+ <= f - (eta/2)||g||^2, which is (1/2L)||g||^2 at eta = 1/L
        assert b.f <= a.f - eta * a.gnorm ** 2 / 2 + 1e-10


def test_nonconvex_gradient_bound():
    # Rosenbrock-like non-convex toy with known f* = -0.25: f = x^4 - x^2
    p = make_problem("quartic_1d")
    L = 10.0  # |f''| <= 10 on [-1, 1], where the iterates stay
    rep = gradient_descent(p, GDConfig(StepRule.fixed(1 / L), stop=StopRule(grad_tol=0, max_iters=200)), [0.9])
    best = np.inf
    for t, r in enumerate(rep.trace):
        best = min(best, r.gnorm ** 2)
        assert best <= 2 * L * (rep.trace[0].f + 0.25) / (t + 1) + 1e-12
