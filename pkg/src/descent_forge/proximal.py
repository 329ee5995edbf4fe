"""Proximal operators, projections and the prox/projection based solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .core import (
    CapabilityError,
    EvaluationError,
    Oracle,
    ParameterError,
    Problem,
    RankError,
    Recorder,
    Report,
    StopRule,
    as_vector,
    finite,
)
from .linesearch import StepRule, exact_step
from .linsolve import cholesky, forward_sub, back_sub, svd


# -- sets ---------------------------------------------------------------------

@dataclass(frozen=True)
class SetSpec:
    """Projectable set: ``box``, ``l2_ball``, ``affine``, ``orthogonal_cone``
    or ``custom``. Build with the classmethods."""

    kind: str
    params: tuple = ()
    lmo_fn: Optional[Callable] = None

    @classmethod
    def box(cls, lo, hi) -> "SetSpec":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            raise ParameterError("box requires lo <= hi")
        return cls("box", (lo, hi))

    @classmethod
    def l2_ball(cls, center, r: float) -> "SetSpec":
        if r <= 0:
            raise ParameterError("ball radius must be positive")
        return cls("l2_ball", (np.asarray(center, dtype=float), float(r)))

    @classmethod
    def affine(cls, A, b) -> "SetSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape[0] != b.size:
            raise ParameterError("affine set: rows of A must match b")
        return cls("affine", (A, b))

    @classmethod
    def orthogonal_cone(cls, scale: float = 1.0) -> "SetSpec":
        return cls("orthogonal_cone", (float(scale),))

    @classmethod
    def custom(cls, project_fn: Callable, lmo_fn: Optional[Callable] = None) -> "SetSpec":
        return cls("custom", (project_fn,), lmo_fn)


def _pinv_apply(A, r):
    """``A^T (A A^T)^{-1} r`` with a rank check on ``A``."""
    s = svd(A).S
    tol = 1e-12 * max(A.shape) * (s[0] if s.size else 0.0)
    if s.size < A.shape[0] or s[-1] <= tol:
        raise RankError("affine set requires A with full row rank")
    L = cholesky(A @ A.T)
    return A.T @ back_sub(L.T, forward_sub(L, r))


def project(s: SetSpec, x):
    """Euclidean projection of ``x`` onto ``s``."""
    x = np.asarray(x, dtype=float)
    if s.kind == "box":
        lo, hi = s.params
        return np.clip(x, lo, hi)
    if s.kind == "l2_ball":
        c, r = s.params
        d = x - c
        nd = np.linalg.norm(d)
        return x.copy() if nd <= r else c + (r / nd) * d
    if s.kind == "affine":
        A, b = s.params
        return x - _pinv_apply(A, A @ x - b)
    if s.kind == "orthogonal_cone":
        if x.ndim != 2:
            raise ParameterError("orthogonal cone projection requires a matrix")
        r = svd(x)
        return s.params[0] * (r.U @ r.V.T)
    if s.kind == "custom":
        y = np.asarray(s.params[0](x), dtype=float)
        if not np.all(np.isfinite(y)):
            raise EvaluationError("custom projection returned non-finite values")
        return y
    raise ParameterError(f"unknown set kind {s.kind!r}")


def lmo(s: SetSpec, g):
    """``argmin_{y in S} g^T y`` for boxes, balls and custom sets with an LMO."""
    g = np.asarray(g, dtype=float)
    if s.kind == "box":
        lo, hi = np.broadcast_arrays(*s.params, g)[:2]
        y = np.where(g > 0, lo, hi)
        if not np.all(np.isfinite(y)):
            raise ParameterError("LMO over an unbounded box")
        return y.astype(float)
    if s.kind == "l2_ball":
        c, r = s.params
        ng = np.linalg.norm(g)
        return c.copy() if ng == 0 else c - r * g / ng
    if s.lmo_fn is not None:
        return np.asarray(s.lmo_fn(g), dtype=float)
    raise CapabilityError(f"no linear minimization oracle for set kind {s.kind!r}")


def distance(s: SetSpec, x) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float) - project(s, x)))


# -- prox ---------------------------------------------------------------------

@dataclass(frozen=True)
class ProxSpec:
    """``zero``, ``l1(lam)``, ``l2(lam)``, ``indicator(set)`` or ``custom``.

    ``custom`` takes ``prox_fn(t, x)`` computing ``prox_{t g}(x)`` and an
    optional ``value_fn``.
    """

    kind: str = "zero"
    lam: float = 0.0
    set: Optional[SetSpec] = None
    prox_fn: Optional[Callable] = None
    value_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be nonnegative")
        if self.kind not in ("zero", "l1", "l2", "indicator", "custom"):
            raise ParameterError(f"unknown prox kind {self.kind!r}")

    @classmethod
    def l1(cls, lam: float) -> "ProxSpec":
        return cls("l1", lam)

    @classmethod
    def l2(cls, lam: float) -> "ProxSpec":
        return cls("l2", lam)

    @classmethod
    def indicator(cls, s: SetSpec) -> "ProxSpec":
        return cls("indicator", set=s)

    @classmethod
    def custom(cls, prox_fn, value_fn=None) -> "ProxSpec":
        return cls("custom", prox_fn=prox_fn, value_fn=value_fn)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "l1":
            return self.lam * float(np.sum(np.abs(x)))
        if self.kind == "l2":
            return self.lam * float(np.linalg.norm(x))
        if self.kind == "indicator":
            return 0.0 if distance(self.set, x) <= 1e-9 * (1 + np.linalg.norm(x)) else math.inf
        if self.kind == "custom":
            return 0.0 if self.value_fn is None else float(self.value_fn(x))
        return 0.0


def soft_threshold(x, t):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def prox(spec: ProxSpec, x, scale: float = 1.0):
    """``prox_{scale * g}(x)`` for the function ``g`` described by ``spec``."""
    x = np.asarray(x, dtype=float)
    t = scale * spec.lam
    if spec.kind == "zero":
        return x.copy()
    if spec.kind == "l1":
        return soft_threshold(x, t)
    if spec.kind == "l2":
        nx = np.linalg.norm(x)
        return (1 - t / max(nx, t)) * x if t > 0 else x.copy()
    if spec.kind == "indicator":
        return project(spec.set, x)
    y = np.asarray(spec.prox_fn(scale, x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise EvaluationError("custom prox returned non-finite values")
    return y


def moreau_check(g: ProxSpec, ball: SetSpec, x, lam: float) -> float:
    """``|| prox_{lam g}(x) - (x - lam * P_B(x / lam)) ||_inf`` for a norm
    ``g`` (unit weight, e.g. ``ProxSpec.l1(1.0)``) and the unit ball ``B``
    of its dual norm."""
    x = np.asarray(x, dtype=float)
    lhs = prox(g, x, lam)
    rhs = x - lam * project(ball, x / lam)
    return float(np.max(np.abs(lhs - rhs))) if x.size else 0.0


# -- solvers ------------------------------------------------------------------

def proximal_point(oracle: Oracle, x0, lam: float, stop: StopRule = StopRule()) -> Report:
    """``x+ = prox_{lam f}(x)``; ``gnorm`` is the fixed-point residual
    ``||x - prox_{lam f}(x)||``."""
    oracle.require("prox")
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    x = as_vector(x0)
    rec = Recorder(stop)
    k = 0
    while True:
        p = np.asarray(oracle.prox(lam, x), dtype=float)
        if not finite(p):
            return rec.report(x, "diverged")
        if rec.record(k, oracle.value(x), np.linalg.norm(x - p), lam if k else 0.0):
            return rec.report(x)
        x = p
        k += 1


@dataclass(frozen=True)
class ProxGradConfig:
    step_rule: StepRule = field(default_factory=StepRule)
    gamma: float = 1.0
    stop: StopRule = field(default_factory=StopRule)
    warm_start: bool = False  # armijo: start each search at twice the last accepted step


def _composite_backtrack(oracle, g: ProxSpec, x, fx, gx, eta, shrink=0.5, max_iters=60):
    for _ in range(max_iters):
        y = prox(g, x - eta * gx, eta)
        d = y - x
        if not np.any(d) and np.any(x - prox(g, x - gx, 1.0)):
            break  # step underflowed; x itself is not a fixed point
        quad = (d @ d) / (2 * eta)
        # gradient form of the curvature test (implies the value form for
        # convex f); unlike the value form it stays reliable once f
        # differences drown in rounding
        if (np.asarray(oracle.gradient(y)) - gx) @ d <= quad:
            return eta, y, True
        if quad > 1e-10 * (1 + abs(fx)) and oracle.value(y) <= fx + gx @ d + quad:
            return eta, y, True
        eta *= shrink
    return eta, prox(g, x - eta * gx, eta), False


def proximal_gradient(problem: Problem, g: Optional[ProxSpec] = None, x0=None,
                      config: ProxGradConfig = ProxGradConfig()) -> Report:
    """Proximal gradient ``y = prox_{eta g}(x - eta grad f(x))``,
    ``x+ = x + gamma (y - x)``.

    ``step_rule`` is ``fixed`` (``1/L`` when no ``eta``) or ``armijo``, which
    backtracks on the quadratic upper model of ``f``. The recorded ``f`` is
    the composite objective and ``gnorm`` the gradient-mapping norm
    ``||x - y|| / eta`` at the recorded point. ``g`` defaults to
    ``problem.reg`` (or zero).
    """
    from .first_order import resolve_step

    if g is None:
        g = problem.reg if problem.reg is not None else ProxSpec()
    oracle = problem.oracle
    oracle.require("gradient")
    if not 0 < config.gamma <= 1:
        raise ParameterError("gamma must lie in (0, 1]")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rule = config.step_rule
    if rule.kind == "fixed":
        rule, _ = resolve_step(problem, rule, x)
        eta_base = rule.eta
    elif rule.kind == "armijo":
        eta_base = rule.eta0
    else:
        raise ParameterError("proximal gradient supports 'fixed' and 'armijo' step rules")
    rec = Recorder(config.stop)
    k = 0
    last_eta = 0.0
    while True:
        fx = oracle.value(x)
        gx = np.asarray(oracle.gradient(x), dtype=float)
        if rule.kind == "armijo":
            start = min(eta_base, 2 * last_eta) if config.warm_start and last_eta > 0 else eta_base
            eta, y, ok = _composite_backtrack(oracle, g, x, fx, gx, start, rule.shrink)
        else:
            eta, y, ok = eta_base, prox(g, x - eta_base * gx, eta_base), True
        if not finite(fx, gx, y):
            return rec.report(x, "diverged")
        extras = {} if ok else {"ls_fail": 1.0}
        # a failed backtrack ends at a tiny eta where x - y rounds to zero
        gm = (np.linalg.norm(x - y) / eta if ok
              else np.linalg.norm(x - prox(g, x - eta_base * gx, eta_base)) / eta_base)
        if rec.record(k, fx + g.value(x), gm, last_eta, **extras):
            return rec.report(x)
        x = x + config.gamma * (y - x) if config.gamma != 1 else y
        last_eta = eta
        k += 1


def projected_gradient(problem: Problem, s: SetSpec, x0=None,
                       config: ProxGradConfig = ProxGradConfig()) -> Report:
    """``x+ = P_S(x - eta grad f(x))`` (with ``gamma`` for the two-step form)."""
    return proximal_gradient(problem, ProxSpec.indicator(s), x0, config)


def _feasibility(sets, x) -> float:
    return max(distance(s, x) for s in sets)


def _projection_loop(sets: Sequence[SetSpec], x0, stop: StopRule, step) -> Report:
    if not sets:
        raise ParameterError("need at least one set")
    x = np.array(x0, dtype=float)
    rec = Recorder(stop)
    k = 0
    moved = 0.0
    while True:
        infeas = _feasibility(sets, x)
        if rec.record(k, infeas, infeas, moved):
            rep = rec.report(x)
            if rep.status == "max_iters":
                rep.status = "no_convergence"
            return rep
        x_new = step(x)
        moved = float(np.linalg.norm(x_new - x))
        x = x_new
        k += 1


def pocs(sets: Sequence[SetSpec], x0, stop: StopRule = StopRule(max_iters=1000)) -> Report:
    """Cyclic projections ``x+ = P_1(P_2(...P_c(x)))``.

    ``f`` and ``gnorm`` record the largest distance to any set; running out
    of iterations while infeasible gives ``no_convergence``.
    """
    def step(x):
        for s in reversed(sets):
            x = project(s, x)
        return x

    return _projection_loop(sets, x0, stop, step)


def averaged_projections(sets: Sequence[SetSpec], x0, stop: StopRule = StopRule(max_iters=1000)) -> Report:
    """``x+ = (1/c) sum_j P_j(x)``; bookkeeping as :func:`pocs`."""
    return _projection_loop(sets, x0, stop, lambda x: sum(project(s, x) for s in sets) / len(sets))


def frank_wolfe(problem: Problem, x0, gamma_rule: str = "default",
                stop: StopRule = StopRule(), s: Optional[SetSpec] = None) -> Report:
    """Conditional gradient: ``y = lmo(grad f(x))``, ``x+ = (1-gamma) x + gamma y``.

    ``gamma_rule`` is ``default`` (``2/(k+2)``) or ``line_search`` (exact
    minimisation over ``[0, 1]``). ``gnorm`` records the duality gap
    ``grad f(x)^T (x - y)``. The LMO is ``oracle.lmo`` or that of ``s``.
    """
    oracle = problem.oracle
    oracle.require("gradient")
    if oracle.lmo is not None:
        lmo_fn = oracle.lmo
    elif s is not None:
        lmo_fn = lambda g: lmo(s, g)
    else:
        raise CapabilityError("frank_wolfe needs an LMO")
    if gamma_rule not in ("default", "line_search"):
        raise ParameterError(f"unknown gamma rule {gamma_rule!r}")
    x = as_vector(x0)
    rec = Recorder(stop)
    k = 0
    last = 0.0
    while True:
        fx = oracle.value(x)
        gx = np.asarray(oracle.gradient(x), dtype=float)
        y = np.asarray(lmo_fn(gx), dtype=float)
        gap = float(gx @ (x - y))
        if not finite(fx, gx, y):
            return rec.report(x, "diverged")
        if rec.record(k, fx, max(gap, 0.0), last, fw_gap=gap):
            return rec.report(x)
        if gamma_rule == "default":
            gamma = 2.0 / (k + 2)
        else:
            gamma = min(exact_step(oracle, x, y - x), 1.0)
        x = (1 - gamma) * x + gamma * y
        last = gamma
        k += 1
