"""Huber smoothing, subgradients, subgradient methods and coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    CapabilityError,
    EvaluationError,
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    Report,
    StopRule,
    as_vector,
    finite,
)
from .proximal import SetSpec, project, soft_threshold
from .stochastic import BatchPlan, Schedule, make_rng, sample_batches


@dataclass(frozen=True)
class HuberParams:
    mu: float = 1.0
    kind: str = "huber"

    def __post_init__(self):
        if self.mu <= 0:
            raise ParameterError("mu must be positive")
        if self.kind not in ("huber", "pseudo_huber"):
            raise ParameterError(f"unknown kind {self.kind!r}")


def huber(x, p: HuberParams = HuberParams()):
    """Value and derivative of the (pseudo-)Huber function; works elementwise."""
    x = np.asarray(x, dtype=float)
    mu = p.mu
    if p.kind == "huber":
        inner = np.abs(x) <= mu
        val = np.where(inner, x * x / (2 * mu), np.abs(x) - mu / 2)
        der = np.where(inner, x / mu, np.sign(x))
    else:
        r = np.sqrt((x / mu) ** 2 + 1)
        val = r - 1
        der = x / (mu * mu * r)
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


def huber_l1(d: int, p: HuberParams = HuberParams()) -> Oracle:
    """Oracle for ``sum_j h_mu(x_j)``, a smooth surrogate of ``||x||_1``."""
    return Oracle(
        value=lambda x: float(np.sum(huber(np.atleast_1d(x), p)[0])),
        gradient=lambda x: np.asarray(huber(np.atleast_1d(x), p)[1], dtype=float),
    )


@dataclass(frozen=True)
class Subdifferential1D:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ParameterError("require lo <= hi")

    @property
    def singleton(self) -> bool:
        return self.lo == self.hi

    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, g: float) -> bool:
        return self.lo <= g <= self.hi


def subdiff_abs(x: float) -> Subdifferential1D:
    if x > 0:
        return Subdifferential1D(1.0, 1.0)
    if x < 0:
        return Subdifferential1D(-1.0, -1.0)
    return Subdifferential1D(-1.0, 1.0)


def subgrad_l1(x):
    """Midpoint subgradient of ``||x||_1`` (``sign`` with 0 at kinks)."""
    return np.sign(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SubgradConfig:
    schedule: Schedule = field(default_factory=Schedule)
    stop: StopRule = field(default_factory=lambda: StopRule(grad_tol=0.0, max_iters=1000))
    seed: int = 0
    batch_size: int = 1


def _full_subgradient(o: Oracle) -> Callable:
    if o.subgradient is not None:
        return o.subgradient
    if o.gradient is not None:
        return o.gradient
    raise CapabilityError("subgradient method needs a subgradient or gradient")


def _term_subgradient(o: Oracle) -> Callable:
    if o.term_subgradient is not None:
        return o.term_subgradient
    if o.term_gradient is not None:
        return o.term_gradient
    raise CapabilityError("stochastic subgradient method needs per-term subgradients")


def subgradient_method(problem: Problem, mode: str = "full", s: Optional[SetSpec] = None,
                       config: SubgradConfig = SubgradConfig(), x0=None) -> Report:
    """``x+ = x - eta_k g`` with ``g`` a subgradient (full, one sampled term
    or a mini-batch average), optionally followed by projection onto ``s``.

    ``extras['best_f']`` tracks the best value so far; ``info['best_x']``
    holds its point.
    """
    o = problem.oracle
    if mode == "full":
        sub = _full_subgradient(o)
        draw = None
    elif mode in ("stochastic", "minibatch"):
        tsub = _term_subgradient(o)
        n = o.term_count
        if n < 1:
            raise ParameterError("stochastic modes need term_count >= 1")
        if mode == "stochastic":
            rng = make_rng(config.seed)
            draw = lambda: [int(rng.integers(n))]
        else:
            plan = BatchPlan(n, config.batch_size, seed=config.seed)
            state = {"epoch": 0, "queue": []}

            def draw():
                if not state["queue"]:
                    state["queue"] = list(sample_batches(plan, state["epoch"]))
                    state["epoch"] += 1
                return [int(i) for i in state["queue"].pop(0)]
        sub = None
    else:
        raise ParameterError(f"unknown mode {mode!r}")

    def subgrad(x):
        if draw is None:
            return np.asarray(sub(x), dtype=float), None
        idx = draw()
        return sum(np.asarray(tsub(i, x), dtype=float) for i in idx) / len(idx), idx[0]

    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    if s is not None:
        x = project(s, x)
    rec = Recorder(config.stop)
    f = o.value(x)
    best_f, best_x = f, x.copy()
    g, idx = subgrad(x)
    extras = {"best_f": best_f}
    if rec.record(0, f, np.linalg.norm(g), 0.0, **extras):
        return rec.report(x, best_x=best_x, best_f=best_f)
    k = 0
    while True:
        k += 1
        eta = config.schedule(k)
        x_new = x - eta * g
        if s is not None:
            x_new = project(s, x_new)
        f = o.value(x_new)
        if not finite(f, x_new):
            return rec.report(x, "diverged", best_x=best_x, best_f=best_f)
        x = x_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        used = idx
        g, idx = subgrad(x)
        extras = {"best_f": best_f}
        if used is not None:
            extras["sampled_index"] = used
        if rec.record(k, f, np.linalg.norm(g), eta, **extras):
            return rec.report(x, best_x=best_x, best_f=best_f)


def coordinate_descent(problem: Problem, coord_solver: Callable[[int, np.ndarray], float],
                       stop: StopRule = StopRule(), x0=None, order: str = "cyclic") -> Report:
    """Cyclic (Gauss-Seidel) coordinate minimisation; one record per sweep.

    ``gnorm`` is the gradient norm when available, else the sweep's step norm.
    """
    if order != "cyclic":
        raise ParameterError("only cyclic order is supported")
    o = problem.oracle
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rec = Recorder(stop)

    def gn(x, moved):
        return float(np.linalg.norm(o.gradient(x))) if o.gradient is not None else moved

    if rec.record(0, o.value(x), gn(x, np.inf if o.gradient is None else 0.0), 0.0):
        return rec.report(x)
    k = 0
    while True:
        k += 1
        old = x.copy()
        for j in range(x.size):
            v = float(coord_solver(j, x))
            if not np.isfinite(v):
                raise EvaluationError(f"coordinate solver returned non-finite value for j={j}", index=j)
            x[j] = v
        moved = float(np.linalg.norm(x - old))
        if rec.record(k, o.value(x), gn(x, moved), moved):
            return rec.report(x)


def lasso_objective(X, y, lam, beta) -> float:
    r = y - X @ beta
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(beta)))


def lasso_cd(X, y, lam: float, stop: StopRule = StopRule(grad_tol=0.0, f_change_tol=1e-14, max_iters=10000),
             beta0=None) -> Report:
    """Coordinate descent for ``0.5 ||y - X beta||^2 + lam ||beta||_1``.

    Coordinate update
    ``beta_j = s_{lam/||x_j||^2}(x_j^T (y - X_{-j} beta_{-j}) / x_j^T x_j)``.
    ``gnorm`` is the sup-norm violation of the subgradient optimality
    condition, so ``grad_tol`` bounds it directly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    n, d = X.shape
    col2 = np.sum(X * X, axis=0)
    for j in range(d):
        if col2[j] == 0:
            raise ZeroDivisionError(f"column {j} of X is zero")
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    r = y - X @ beta

    def violation(beta, r):
        c = X.T @ r
        v = np.where(beta != 0, np.abs(c - lam * np.sign(beta)), np.maximum(np.abs(c) - lam, 0.0))
        return float(np.max(v)) if d else 0.0

    rec = Recorder(stop)
    if rec.record(0, lasso_objective(X, y, lam, beta), violation(beta, r), 0.0):
        return rec.report(beta)
    k = 0
    while True:
        k += 1
        moved = 0.0
        for j in range(d):
            rho = X[:, j] @ r + col2[j] * beta[j]  # x_j^T (y - X_{-j} beta_{-j})
            new = float(soft_threshold(rho / col2[j], lam / col2[j]))
            if new != beta[j]:
                r -= X[:, j] * (new - beta[j])
                moved = max(moved, abs(new - beta[j]))
                beta[j] = new
        r = y - X @ beta  # refresh to avoid drift
        if rec.record(k, lasso_objective(X, y, lam, beta), violation(beta, r), moved):
            return rec.report(beta)
