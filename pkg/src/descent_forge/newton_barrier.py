"""Newton's method (unconstrained and equality constrained), the log-barrier
interior-point method and a KKT residual checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DefinitenessError,
    FeasibilityError,
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    Report,
    SingularMatrixError,
    StopRule,
    as_vector,
    finite,
)
from .linesearch import StepRule
from .linsolve import BlockSystem, cholesky, solve_linear, solve_schur, svd

NEWTON_STOP = StopRule(grad_tol=1e-10, max_iters=100)


def _cond_estimate(H) -> float:
    s = svd(H).S
    return math.inf if s[-1] == 0 else float(s[0] / s[-1])


def newton_direction(H, g):
    """``-H^{-1} g`` via Cholesky when ``H`` is SPD, LU otherwise."""
    try:
        return -solve_linear(H, g, "auto")
    except SingularMatrixError as e:
        raise SingularMatrixError(f"singular Hessian (condition estimate {_cond_estimate(H):.3e})",
                                  pivot=e.pivot) from e


def newton_unconstrained(problem: Problem, step_rule: StepRule = StepRule.fixed(1.0),
                         stop: StopRule = NEWTON_STOP, x0=None) -> Report:
    """Newton's method ``x+ = x + eta p`` with ``p = -H^{-1} grad``.

    ``fixed(1)`` gives the pure method; other rules damp the step. A
    Newton direction that is not a descent direction is replaced by the
    negative gradient (flagged in ``extras['fallback']``) when damping.
    """
    o = problem.oracle
    o.require("gradient", "hessian")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rec = Recorder(stop)
    f = o.value(x)
    g = np.asarray(o.gradient(x), dtype=float)
    if rec.record(0, f, np.linalg.norm(g), 0.0):
        return rec.report(x)
    k = 0
    while True:
        p = newton_direction(np.asarray(o.hessian(x), dtype=float), g)
        extras = {}
        if step_rule.kind != "fixed" and g @ p >= 0:
            p = -g
            extras["fallback"] = 1.0
        eta, ok = step_rule.select(o, x, p, f, g)
        if not ok:
            extras["ls_fail"] = 1.0
        x_new = x + eta * p
        f_new = o.value(x_new)
        g_new = np.asarray(o.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(x, "diverged")
        x, f, g = x_new, f_new, g_new
        if rec.record(k, f, np.linalg.norm(g), eta, **extras):
            return rec.report(x)


@dataclass(frozen=True)
class KKTSystem:
    H: np.ndarray
    A: np.ndarray
    grad: np.ndarray
    residual_primal: np.ndarray

    def matrix(self):
        m = self.A.shape[0]
        return np.block([[self.H.T, self.A.T], [self.A, np.zeros((m, m))]])

    def rhs(self):
        return -np.concatenate([self.grad, self.residual_primal])

    def solve(self):
        """``(p, nu)``; Schur-complement path when ``H`` is SPD, LU otherwise."""
        d = self.H.shape[0]
        try:
            cholesky(self.H)
            spd = True
        except DefinitenessError:
            spd = False
        try:
            if spd:
                m = self.A.shape[0]
                return solve_schur(BlockSystem(self.H.T, self.A.T, self.A, np.zeros((m, m)),
                                               -self.grad, -self.residual_primal))
            z = solve_linear(self.matrix(), self.rhs(), "lu")
        except SingularMatrixError as e:
            raise SingularMatrixError(f"KKT matrix is singular or rank deficient: {e}") from e
        return z[:d], z[d:]


def _ls_multiplier(A, g):
    """``nu`` minimising ``||g + A^T nu||``."""
    return -solve_linear(A @ A.T, A @ g, "auto")


def newton_equality(problem: Problem, x0=None, stop: StopRule = NEWTON_STOP,
                    infeasible_start: bool = False, step_rule: StepRule = StepRule.fixed(1.0)) -> Report:
    """Newton's method for ``min f s.t. Ax = b`` through the KKT system
    ``[[H^T, A^T], [A, 0]] [p; nu] = -[grad; Ax - b]``.

    With ``infeasible_start`` the first step carries ``Ax - b`` and is
    taken in full, which restores ``Ax = b``; later steps keep it. ``gnorm``
    is ``||grad + A^T nu||`` with the least-squares multiplier and
    ``extras['primal_res']`` is ``||Ax - b||``. ``info['nu']`` holds the
    multiplier at the returned point.
    """
    o = problem.oracle
    o.require("gradient", "hessian")
    if problem.eq_affine is None:
        rep = newton_unconstrained(problem, step_rule, stop, x0)
        rep.info["nu"] = np.zeros(0)
        return rep
    A, b = problem.eq_affine
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    r0 = A @ x - b
    if not infeasible_start and np.linalg.norm(r0) > 1e-10:
        raise FeasibilityError("x0 violates Ax = b; pass infeasible_start=True")
    s = svd(A).S
    if s.size < A.shape[0] or s[-1] <= 1e-12 * max(A.shape) * s[0]:
        raise SingularMatrixError("A must have full row rank for the KKT system")

    def stationarity(x, g):
        nu = _ls_multiplier(A, g)
        return float(np.linalg.norm(g + A.T @ nu)), nu

    rec = Recorder(stop)
    f = o.value(x)
    g = np.asarray(o.gradient(x), dtype=float)
    gn, nu = stationarity(x, g)
    feasible = np.linalg.norm(r0) <= 1e-10
    if feasible and rec.record(0, f, gn, 0.0, primal_res=float(np.linalg.norm(r0))):
        return rec.report(x, nu=nu)
    if not feasible:
        rec.record(0, f, gn + np.linalg.norm(r0), 0.0, primal_res=float(np.linalg.norm(r0)))
    k = 0
    while True:
        r = A @ x - b if not feasible else np.zeros(A.shape[0])
        p, nu_step = KKTSystem(np.asarray(o.hessian(x), dtype=float), A, g, r).solve()
        extras = {}
        if not feasible:
            eta = 1.0
            feasible = True
        else:
            if step_rule.kind != "fixed" and g @ p >= 0:
                eta, ok = 0.0, False
            else:
                eta, ok = step_rule.select(o, x, p, f, g)
            if not ok:
                extras["ls_fail"] = 1.0
        x_new = x + eta * p
        f_new = o.value(x_new)
        g_new = np.asarray(o.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(x, "diverged", nu=nu)
        x, f, g = x_new, f_new, g_new
        gn, nu = stationarity(x, g)
        extras["primal_res"] = float(np.linalg.norm(A @ x - b))
        if rec.record(k, f, gn, eta, **extras) or eta == 0.0:
            return rec.report(x, nu=nu, nu_step=nu_step)


# -- barrier ------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierConfig:
    t0: float = 1.0
    mu_factor: float = 10.0
    eps_gap: float = 1e-6
    inner: StopRule = field(default_factory=lambda: StopRule(grad_tol=1e-8, max_iters=200))
    single_shot: bool = False
    max_stages: int = 100

    def __post_init__(self):
        if self.t0 <= 0 or self.mu_factor <= 1 or self.eps_gap <= 0:
            raise ParameterError("require t0 > 0, mu_factor > 1, eps_gap > 0")


def _con_eval(c: Oracle, x):
    y = float(c.value(x))
    g = np.asarray(c.gradient(x), dtype=float)
    H = np.asarray(c.hessian(x), dtype=float) if c.hessian is not None else np.zeros((x.size, x.size))
    return y, g, H


def barrier_oracle(problem: Problem, t: float) -> Oracle:
    """``f(x) - (1/t) sum log(-y_i(x))``; ``+inf`` outside the strict interior.

    Constraint oracles without a Hessian are treated as affine.
    """
    o = problem.oracle
    cons = problem.ineq

    def value(x):
        ys = [float(c.value(x)) for c in cons]
        if any(not (yi < 0) for yi in ys):
            return math.inf
        return float(o.value(x)) - sum(math.log(-yi) for yi in ys) / t

    def gradient(x):
        g = np.asarray(o.gradient(x), dtype=float).copy()
        for c in cons:
            y, gy, _ = _con_eval(c, x)
            g += gy / (-y * t)
        return g

    def hessian(x):
        H = np.asarray(o.hessian(x), dtype=float).copy()
        for c in cons:
            y, gy, Hy = _con_eval(c, x)
            H += (np.outer(gy, gy) / (y * y) + Hy / (-y)) / t
        return H

    return Oracle(value=value, gradient=gradient, hessian=hessian)


def barrier_multipliers(problem: Problem, x, t: float) -> np.ndarray:
    """``lambda_i(t) = -1 / (t y_i(x))``."""
    return np.array([-1.0 / (t * float(c.value(x))) for c in problem.ineq])


def barrier_stage(problem: Problem, t: float, x0, inner: StopRule = StopRule(grad_tol=1e-8, max_iters=200),
                  infeasible_start: bool = False) -> Report:
    """Minimise the barrier objective at a fixed ``t`` by damped Newton."""
    bp = Problem(barrier_oracle(problem, t), problem.d, eq_affine=problem.eq_affine)
    rule = StepRule("armijo", c=1e-4, shrink=0.5, max_halvings=80)
    if problem.eq_affine is None:
        return newton_unconstrained(bp, rule, inner, x0)
    return newton_equality(bp, x0, inner, infeasible_start=infeasible_start, step_rule=rule)


def interior_point(problem: Problem, barrier: BarrierConfig = BarrierConfig(), x0=None) -> Report:
    """Log-barrier path following: solve at ``t``, then ``t <- mu_factor t``
    until ``m1/t <= eps_gap``.

    One trace record per outer stage (``step`` is ``t``). ``info`` carries
    ``t``, ``gap = m1/t``, the multipliers ``lam`` and ``nu``, and
    ``stages``: a list of ``(t, x, lam)`` tuples.
    """
    o = problem.oracle
    o.require("gradient", "hessian")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    m1 = problem.m1
    if m1 == 0:
        rep = newton_equality(problem, x, barrier.inner, infeasible_start=True)
        rep.info.update(t=math.inf, gap=0.0, lam=np.zeros(0), stages=[])
        return rep
    ys = [float(c.value(x)) for c in problem.ineq]
    bad = [i for i, y in enumerate(ys) if not y < 0]
    if bad:
        raise FeasibilityError(f"x0 is not strictly feasible for constraints {bad}", violated=bad)
    t = m1 / barrier.eps_gap if barrier.single_shot else barrier.t0
    outer = StopRule(grad_tol=0.0, max_iters=barrier.max_stages + 1)
    rec = Recorder(outer)
    stages = []
    infeasible = problem.eq_affine is not None
    k = 0
    while True:
        rep = barrier_stage(problem, t, x, barrier.inner, infeasible_start=infeasible)
        infeasible = False
        if rep.status == "diverged":
            return rec.report(x, "diverged", t=t, gap=m1 / t, stages=stages)
        x = rep.x
        lam = barrier_multipliers(problem, x, t)
        stages.append((t, x.copy(), lam))
        gap = m1 / t
        rec.record(k, o.value(x), rep.trace[-1].gnorm, t, gap=gap, t=t,
                   inner_iters=float(rep.iterations))
        if gap <= barrier.eps_gap * (1 + 1e-12) or k + 1 >= barrier.max_stages:
            status = "converged" if gap <= barrier.eps_gap * (1 + 1e-12) else "max_iters"
            nu = rep.info.get("nu", np.zeros(problem.m2))
            return rec.report(x, status, t=t, gap=gap, lam=lam, nu=nu, stages=stages)
        t *= barrier.mu_factor
        k += 1


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    primal_ineq: float
    primal_eq: float
    dual_feas: float
    comp_slack: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_ineq, self.primal_eq, self.dual_feas, self.comp_slack)


def kkt_residuals(problem: Problem, x, lam=None, nu=None) -> KKTResiduals:
    """Residuals of the four KKT conditions at ``(x, lam, nu)``."""
    x = np.asarray(x, dtype=float)
    lam = np.zeros(problem.m1) if lam is None else np.asarray(lam, dtype=float)
    nu = np.zeros(problem.m2) if nu is None else np.asarray(nu, dtype=float)
    if lam.size != problem.m1:
        raise ParameterError(f"lambda has length {lam.size}, expected m1={problem.m1}")
    if nu.size != problem.m2:
        raise ParameterError(f"nu has length {nu.size}, expected m2={problem.m2}")
    problem.oracle.require("gradient")
    g = np.asarray(problem.oracle.gradient(x), dtype=float).copy()
    ys = np.array([float(c.value(x)) for c in problem.ineq])
    for li, c in zip(lam, problem.ineq):
        g += li * np.asarray(c.gradient(x), dtype=float)
    eq = 0.0
    if problem.eq_affine is not None:
        A, b = problem.eq_affine
        g += A.T @ nu
        eq = float(np.max(np.abs(A @ x - b)))
    return KKTResiduals(
        stationarity=float(np.linalg.norm(g)),
        primal_ineq=float(np.max(np.maximum(ys, 0.0))) if ys.size else 0.0,
        primal_eq=eq,
        dual_feas=float(np.max(np.maximum(-lam, 0.0))) if lam.size else 0.0,
        comp_slack=float(np.max(np.abs(lam * ys))) if lam.size else 0.0,
    )
