import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from descent_forge.core import CapabilityError, ParameterError, RankError, StopRule, check_gradient
from descent_forge.linesearch import StepRule
from descent_forge.newton_barrier import BarrierConfig, interior_point, kkt_residuals, newton_equality, newton_unconstrained
from descent_forge.problems import (
    KINDS,
    DataError,
    DatasetLS,
    add_slack,
    affine_constraint,
    eliminate_equality,
    epigraph_form,
    load_csv,
    make_problem,
    null_space,
    qp_problem,
    slack_point,
    synthetic_dataset,
)
from descent_forge.quasi_newton import qn_solve
from descent_forge.stochastic import make_rng


def test_ls_identity_gradient():
    y = np.array([1.0, -2.0, 0.5])
    pr = make_problem("ls", (np.eye(3), y), reduction="sum")
    x = np.array([0.3, 0.3, 0.3])
    assert np.allclose(pr.oracle.gradient(x), x - y)
    assert np.allclose(pr.x_star, y)


def test_ls_mean_scaling():
    y = np.array([1.0, -2.0, 0.5])
    pr = make_problem("ls", (np.eye(3), y))
    assert np.allclose(pr.oracle.gradient(np.zeros(3)), -y / 3)


def test_logistic_at_zero():
    ds = synthetic_dataset(30, 4, "logistic", seed=2)
    pr = make_problem("logistic", ds)
    assert pr.oracle.value(np.zeros(4)) == pytest.approx(math.log(2), abs=1e-15)
    assert pr.oracle.term_value(0, np.zeros(4)) == pytest.approx(math.log(2), abs=1e-15)


def test_unconstrained_qp_newton_one_step():
    P = np.array([[4.0, 1.0], [1.0, 3.0]])
    pr = qp_problem(P, [1.0, -1.0])
    rep = newton_unconstrained(pr, x0=[7.0, -3.0])
    assert rep.iterations == 1
    assert np.allclose(P @ rep.x, [-1.0, 1.0])


@pytest.mark.parametrize("kind", ["hinge", "abs"])
def test_nonsmooth_losses_have_no_gradient(kind):
    pr = make_problem(kind, n=20, d=3, seed=1)
    with pytest.raises(CapabilityError):
        pr.oracle.require("gradient")
    assert pr.oracle.subgradient(np.zeros(3)).shape == (3,)


def test_invalid_labels():
    with pytest.raises(ParameterError):
        DatasetLS(np.ones((2, 2)), [0.0, 1.0], "hinge")


def test_shape_mismatch():
    with pytest.raises(ParameterError):
        make_problem("ls", (np.ones((3, 2)), np.ones(4)))


def test_unknown_kind():
    with pytest.raises(ParameterError):
        make_problem("nope")


def test_csv_round_trip(tmp_path):
    ds = synthetic_dataset(12, 3, "logistic", seed=9)
    path = tmp_path / "d.csv"
    rows = ["a,b,c,label"] + [",".join(repr(float(v)) for v in (*a, l)) for a, l in zip(ds.A, ds.labels)]
    path.write_text("\n".join(rows) + "\n")
    back = load_csv(str(path), "logistic")
    assert np.array_equal(back.A, ds.A) and np.array_equal(back.labels, ds.labels)


def test_csv_errors(tmp_path):
    with pytest.raises(DataError):
        load_csv(str(tmp_path / "missing.csv"))
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        load_csv(str(bad))


def test_synthetic_deterministic():
    a = synthetic_dataset(10, 3, seed=4)
    b = synthetic_dataset(10, 3, seed=4)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.labels, b.labels)


SMOOTH = ["ls", "logistic", "lasso", "quadratic", "barrier_1d", "box_qp", "equality_toy", "consensus_average",
          "orthonormal_lasso", "rosenbrock", "quartic_1d"]


@pytest.mark.parametrize("kind", SMOOTH)
def test_builtin_gradients(kind):
    pr = make_problem(kind, seed=3, n=40, d=5) if kind in ("ls", "logistic", "lasso") else make_problem(kind, seed=3)
    rng = make_rng(21)
    for _ in range(3):
        assert check_gradient(pr.oracle, rng.standard_normal(pr.d) * 0.5) <= 1e-5
    for c in pr.ineq:
        assert check_gradient(c, rng.standard_normal(pr.d)) <= 1e-5


def test_kinds_all_constructible():
    for kind in KINDS:
        if kind == "qp":
            continue
        assert make_problem(kind, seed=0, n=20, d=3).d >= 1


def test_null_space_hand_values():
    pinv, C = null_space([[1.0, 1.0]])
    assert np.allclose(pinv @ [1.0], [0.5, 0.5])
    assert abs(abs(C[0, 0]) - 1 / math.sqrt(2)) < 1e-12 and C[0, 0] == pytest.approx(-C[1, 0])


def test_eliminate_lift_zero():
    red, lift = eliminate_equality(make_problem("equality_toy"))
    assert np.allclose(lift(np.zeros(1)), [0.5, 0.5])
    assert red.d == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_lift_round_trip(seed, m):
    rng = make_rng(seed)
    d = m + 3
    A = rng.standard_normal((m, d))
    b = rng.standard_normal(m)
    pr = qp_problem(np.eye(d), np.zeros(d), A=A, b=b)
    _, lift = eliminate_equality(pr)
    u = rng.standard_normal(d - m) * 10
    assert np.allclose(A @ lift(u), b, atol=1e-10)


def test_elimination_matches_newton_equality():
    rng = make_rng(5)
    P = rng.standard_normal((4, 4))
    P = P @ P.T + np.eye(4)
    pr = qp_problem(P, rng.standard_normal(4), A=rng.standard_normal((2, 4)), b=rng.standard_normal(2))
    red, lift = eliminate_equality(pr)
    u = newton_unconstrained(red, x0=np.zeros(2)).x
    x = newton_equality(pr, x0=lift(np.zeros(2))).x
    assert np.allclose(lift(u), x, atol=1e-8)


def test_rank_deficient_elimination():
    with pytest.raises(RankError):
        null_space([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])


def test_no_equalities_identity():
    pr = make_problem("rosenbrock")
    red, lift = eliminate_equality(pr)
    assert red is pr and np.array_equal(lift([1.0, 2.0]), [1.0, 2.0])


def test_slack_witness_and_boundary():
    pr = qp_problem(np.eye(1), [0.0], G=[[1.0]], h=[1.0])
    sp = add_slack(pr)
    assert sp.d == 2
    w = slack_point(pr, [0.0])
    assert np.allclose(w, [0.0, 1.0])
    A, b = sp.eq_affine
    assert np.allclose(A @ w, b)
    assert slack_point(pr, [1.0])[1] == 0.0


def test_slack_unchanged_without_inequalities():
    pr = make_problem("equality_toy")
    assert add_slack(pr) is pr


def test_slack_needs_affine():
    sq = make_problem("quartic_1d").oracle
    from descent_forge.core import Problem
    with pytest.raises(CapabilityError):
        add_slack(Problem(make_problem("quartic_1d").oracle, 1, ineq=(sq,)))


def test_slack_solution_equivalent():
    pr = make_problem("box_qp")
    sp = add_slack(pr)
    x0 = slack_point(pr, [0.5, 0.5])
    rep = interior_point(sp, BarrierConfig(eps_gap=1e-9), x0=x0)
    assert np.allclose(rep.x[:2], [1.0, 0.0], atol=1e-6)


def test_epigraph_of_half_square():
    pr = qp_problem(np.eye(2), np.zeros(2))
    epi = epigraph_form(pr)
    rep = interior_point(epi, BarrierConfig(eps_gap=1e-9), x0=[0.5, -0.5, 2.0])
    assert rep.x[-1] == pytest.approx(0.0, abs=1e-6)


def test_epigraph_box_qp_value():
    pr = make_problem("box_qp")
    epi = epigraph_form(pr)
    rep = interior_point(epi, BarrierConfig(eps_gap=1e-10), x0=[0.5, 0.5, 5.0])
    assert rep.x[-1] == pytest.approx(pr.f_star, abs=1e-8)


def test_epigraph_feasibility():
    pr = make_problem("rosenbrock")
    epi = epigraph_form(pr)
    x = np.array([0.2, 0.3])
    fx = pr.oracle.value(x)
    assert kkt_residuals(epi, [*x, fx], np.zeros(epi.m1)).primal_ineq == 0.0
    assert kkt_residuals(epi, [*x, fx - 1.0], np.zeros(epi.m1)).primal_ineq == pytest.approx(1.0)


def test_orthonormal_lasso_closed_form():
    pr = make_problem("orthonormal_lasso", y=[2.0, -0.1, -3.0], lam=0.5)
    assert np.allclose(pr.x_star, [1.5, 0.0, -2.5])
