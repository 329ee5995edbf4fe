import numpy as np
import pytest

from descent_forge.core import FeasibilityError, Oracle, ParameterError, Problem, SingularMatrixError, StopRule
from descent_forge.linesearch import StepRule
from descent_forge.newton_barrier import (
    BarrierConfig,
    KKTSystem,
    barrier_stage,
    interior_point,
    kkt_residuals,
    newton_equality,
    newton_unconstrained,
)
from descent_forge.problems import box_qp_optimum, make_problem

from conftest import quad_problem, quadratic, random_spd


def simplex_line(half_square):
    return Problem(half_square, 2, eq_affine=(np.array([[1.0, 1.0]]), np.array([1.0])))


def test_kkt_single_solve(half_square):
    p, nu = KKTSystem(np.eye(2), np.array([[1.0, 1.0]]), np.array([1.0, 0.0]), np.zeros(1)).solve()
    assert np.allclose(np.array([1.0, 0.0]) + p, [0.5, 0.5])
    assert nu == pytest.approx([-0.5])


def test_kkt_matrix_layout():
    sys = KKTSystem(np.diag([2.0, 3.0]), np.array([[1.0, 1.0]]), np.array([1.0, 2.0]), np.array([0.5]))
    M = sys.matrix()
    assert M.shape == (3, 3)
    assert np.array_equal(M[2], [1.0, 1.0, 0.0])
    p, nu = sys.solve()
    assert np.allclose(M @ np.concatenate([p, nu]), sys.rhs())


def test_newton_equality_one_step(half_square):
    rep = newton_equality(simplex_line(half_square), x0=[1.0, 0.0])
    assert np.allclose(rep.x, [0.5, 0.5], atol=1e-14)
    assert rep.info["nu"] == pytest.approx([-0.5])
    assert rep.iterations == 1
    assert rep.status == "converged"


def test_infeasible_start_restores_feasibility(half_square):
    rep = newton_equality(simplex_line(half_square), x0=[3.0, 4.0], infeasible_start=True)
    assert rep.trace[1].extras["primal_res"] < 1e-14
    assert np.allclose(rep.x, [0.5, 0.5])


def test_infeasible_start_required(half_square):
    with pytest.raises(FeasibilityError):
        newton_equality(simplex_line(half_square), x0=[3.0, 4.0])


def test_pure_newton_quadratic_one_step(rng):
    A = random_spd(rng, 6, cond=1e3)
    b = rng.standard_normal(6)
    pr = quad_problem(A, b)
    rep = newton_unconstrained(pr, x0=np.ones(6))
    assert rep.iterations == 1
    assert np.allclose(rep.x, pr.x_star, atol=1e-10)


def test_singular_hessian_raises():
    o = quadratic(np.diag([1.0, 0.0]), [1.0, 1.0])
    with pytest.raises(SingularMatrixError, match="condition"):
        newton_unconstrained(Problem(o, 2), x0=[0.0, 0.0])


def test_damped_newton_quartic_plus_square():
    # x^4 + x^2 from far away; pure Newton is fine here but damping must not hurt
    o = Oracle(lambda x: float(x[0] ** 4 + x[0] ** 2), lambda x: np.array([4 * x[0] ** 3 + 2 * x[0]]),
               lambda x: np.array([[12 * x[0] ** 2 + 2]]))
    rep = newton_unconstrained(Problem(o, 1), StepRule("wolfe"), x0=[10.0])
    assert rep.status == "converged"
    assert abs(rep.x[0]) < 1e-8
    assert all(b.f <= a.f for a, b in zip(rep.trace, rep.trace[1:]))


@pytest.mark.parametrize("t", [1.0, 10.0, 1e3])
def test_barrier_central_path_1d(t):
    pr = make_problem("barrier_1d")
    rep = barrier_stage(pr, t, [5.0], StopRule(grad_tol=1e-12, max_iters=200))
    assert rep.x[0] == pytest.approx(1.0 / t, rel=1e-8)


def test_interior_point_box_qp():
    pr = make_problem("box_qp")
    rep = interior_point(pr, BarrierConfig(eps_gap=1e-8), x0=[0.5, 0.5])
    assert rep.status == "converged"
    assert np.allclose(rep.x, [1.0, 0.0], atol=1e-6)
    assert rep.info["gap"] <= 1e-8
    res = kkt_residuals(pr, rep.x, rep.info["lam"])
    assert res.max() < 1e-6


def test_interior_point_gap_schedule():
    rep = interior_point(make_problem("barrier_1d"), BarrierConfig(t0=1.0, mu_factor=10.0, eps_gap=1e-4), x0=[1.0])
    assert [r.step for r in rep.trace] == [1.0, 10.0, 100.0, 1e3, 1e4]
    assert rep.x[0] == pytest.approx(1e-4, rel=1e-6)
    assert rep.info["lam"] == pytest.approx([1.0], rel=1e-6)


def test_interior_point_random_box_qp(rng):
    P = random_spd(rng, 3, cond=20.0)
    q = rng.standard_normal(3) * 3
    lo, hi = np.zeros(3), np.ones(3)
    pr = make_problem("box_qp", P=P.tolist(), q=q.tolist(), lo=lo.tolist(), hi=hi.tolist())
    x_ref, f_ref = box_qp_optimum(P, q, lo, hi)
    rep = interior_point(pr, BarrierConfig(eps_gap=1e-9), x0=np.full(3, 0.5))
    assert np.allclose(rep.x, x_ref, atol=1e-6)


def test_interior_point_needs_interior_start():
    with pytest.raises(FeasibilityError):
        interior_point(make_problem("box_qp"), x0=[2.0, 0.5])


def test_kkt_residuals_at_known_optimum():
    pr = make_problem("barrier_1d")
    res = kkt_residuals(pr, [0.0], [1.0])
    assert res.max() == 0.0
    bad = kkt_residuals(pr, [0.5], [1.0])
    assert bad.comp_slack == pytest.approx(0.5)


def test_kkt_residuals_length_check():
    with pytest.raises(ParameterError, match="m1"):
        kkt_residuals(make_problem("box_qp"), [0.5, 0.5], [1.0])


def test_equality_toy_with_nu():
    pr = make_problem("equality_toy")
    rep = newton_equality(pr, x0=[0.0, 0.0], infeasible_start=True)
    assert rep.f == pytest.approx(pr.f_star, abs=1e-12)
    assert kkt_residuals(pr, rep.x, nu=rep.info["nu"]).max() < 1e-10
