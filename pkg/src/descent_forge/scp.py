"""Sequential convex programming with trust regions and an exact-penalty merit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CapabilityError,
    DescentForgeError,
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    Report,
    StopRule,
    as_vector,
    finite,
)
from .linesearch import StepRule
from .linsolve import cholesky, solve_linear, sym_eig
from .proximal import ProxGradConfig, SetSpec, projected_gradient

REGION_FLOOR = 1e-12
VIOLATION_TOL = 1e-8
MODES = ("affine", "quad_psd", "quasilinear")


@dataclass(frozen=True)
class TrustRegion:
    """Box ``|x_j - c_j| <= radius_j`` or ellipse
    ``(x - c)^T P^{-1} (x - c) <= radius``."""

    kind: str
    center: np.ndarray
    radius: np.ndarray
    P: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if self.kind == "box":
            r = np.broadcast_to(np.asarray(self.radius, dtype=float), c.shape).copy()
        elif self.kind == "ellipse":
            r = np.asarray(float(self.radius))
            P = np.eye(c.size) if self.P is None else np.asarray(self.P, dtype=float)
            if P.shape != (c.size, c.size) or not np.allclose(P, P.T):
                raise ParameterError("P must be symmetric and match the center")
            cholesky(P)  # raises DefinitenessError unless SPD
            object.__setattr__(self, "P", P)
        else:
            raise ParameterError(f"unknown trust region kind {self.kind!r}")
        if np.any(r <= 0):
            raise ParameterError("trust region radii must be positive")
        object.__setattr__(self, "radius", r)

    @classmethod
    def box(cls, center, radius) -> "TrustRegion":
        return cls("box", center, radius)

    @classmethod
    def ellipse(cls, center, radius: float, P=None) -> "TrustRegion":
        return cls("ellipse", center, radius, P)

    @property
    def size(self) -> float:
        return float(np.max(self.radius))

    def scaled(self, factor: float) -> "TrustRegion":
        return TrustRegion(self.kind, self.center, self.radius * factor, self.P)

    def recentered(self, x) -> "TrustRegion":
        return TrustRegion(self.kind, x, self.radius, self.P)

    def excess(self, x) -> float:
        """How far ``x`` lies outside the region (0 when inside)."""
        d = np.asarray(x, dtype=float) - self.center
        if self.kind == "box":
            return float(np.max(np.maximum(np.abs(d) - self.radius, 0.0)))
        return max(0.0, float(d @ solve_linear(self.P, d)) - float(self.radius))

    def as_set(self) -> SetSpec:
        if self.kind != "box":
            raise ParameterError("only box regions map to a projection set")
        return SetSpec.box(self.center - self.radius, self.center + self.radius)


@dataclass(frozen=True)
class ScpConfig:
    alpha: float = 0.1
    beta: float = 1.1
    gamma: float = 0.5
    lambda_pen: float = 100.0
    stop: StopRule = field(default_factory=lambda: StopRule(grad_tol=1e-8, max_iters=500))
    mode: str = "quad_psd"
    region_floor: float = REGION_FLOOR
    penalty_growth: float = 2.0
    stall_window: int = 5

    def __post_init__(self):
        if not (0 < self.alpha < 1 <= self.beta):
            raise ParameterError("require 0 < alpha < 1 <= beta")
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma must lie in (0, 1)")
        if self.lambda_pen < 0:
            raise ParameterError("lambda_pen must be nonnegative")
        if self.mode not in MODES:
            raise ParameterError(f"unknown convexification mode {self.mode!r}")


# -- convexification ----------------------------------------------------------

def psd_projection(H) -> np.ndarray:
    """Clip negative eigenvalues of the symmetric matrix ``H`` to zero."""
    H = np.asarray(H, dtype=float)
    w, Q = sym_eig(0.5 * (H + H.T))
    return (Q * np.maximum(w, 0.0)) @ Q.T


def convexify(oracle: Oracle, xk, mode: str = "quad_psd",
              quasi: Optional[tuple[Callable, Callable]] = None) -> Oracle:
    """Convex surrogate of ``oracle`` anchored at ``xk``.

    ``affine``: first-order Taylor model. ``quad_psd``: adds
    ``0.5 (x - xk)^T P (x - xk)`` with ``P`` the PSD projection of the
    Hessian. ``quasilinear``: ``A(xk) x + c(xk)``; by default ``A`` and ``c``
    come from the second-order expansion, ``A(x) = (P x / 2 + b)^T``,
    ``c = a``, otherwise from ``quasi = (A_fn, c_fn)``.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown convexification mode {mode!r}")
    xk = np.asarray(xk, dtype=float).copy()
    d = xk.size
    if mode == "quasilinear" and quasi is not None:
        a_row = np.asarray(quasi[0](xk), dtype=float).ravel()
        c0 = float(quasi[1](xk))
        return Oracle(value=lambda x: float(a_row @ x) + c0, gradient=lambda x: a_row.copy(),
                      hessian=lambda x: np.zeros((d, d)))
    oracle.require("gradient")
    fk = float(oracle.value(xk))
    gk = np.asarray(oracle.gradient(xk), dtype=float)
    if mode == "affine":
        return Oracle(value=lambda x: fk + float(gk @ (x - xk)), gradient=lambda x: gk.copy(),
                      hessian=lambda x: np.zeros((d, d)))
    if oracle.hessian is None:
        raise CapabilityError(f"{mode} convexification needs a Hessian")
    H = np.asarray(oracle.hessian(xk), dtype=float)
    if mode == "quasilinear":
        b = gk - H @ xk
        a = fk - gk @ xk + 0.5 * xk @ H @ xk
        row = 0.5 * H @ xk + b
        return Oracle(value=lambda x: float(row @ x) + a, gradient=lambda x: row.copy(),
                      hessian=lambda x: np.zeros((d, d)))
    P = psd_projection(H)
    return Oracle(
        value=lambda x: fk + float(gk @ (x - xk)) + 0.5 * float((x - xk) @ P @ (x - xk)),
        gradient=lambda x: gk + P @ (x - xk),
        hessian=lambda x: P.copy(),
    )


# -- merit --------------------------------------------------------------------

def _eq_oracles(problem: Problem, eq: Sequence[Oracle]) -> list[Oracle]:
    out = list(eq)
    if problem.eq_affine is not None:
        A, b = problem.eq_affine
        for a_i, b_i in zip(A, b):
            out.append(Oracle(value=lambda x, a=a_i, c=b_i: float(a @ x) - c,
                              gradient=lambda x, a=a_i: a.copy(),
                              hessian=lambda x, n=A.shape[1]: np.zeros((n, n))))
    return out


def _penalty_oracle(f: Oracle, ys: Sequence[Oracle], hs: Sequence[Oracle], lam: float) -> Oracle:
    """``f + lam (sum max(y, 0)^2 + sum h^2)`` with gradient and Hessian."""

    def value(x):
        v = float(f.value(x))
        if lam == 0:
            return v
        return v + lam * (sum(max(float(y.value(x)), 0.0) ** 2 for y in ys)
                          + sum(float(h.value(x)) ** 2 for h in hs))

    def gradient(x):
        g = np.asarray(f.gradient(x), dtype=float).copy()
        for y in ys:
            v = float(y.value(x))
            if v > 0:
                g += 2 * lam * v * np.asarray(y.gradient(x), dtype=float)
        for h in hs:
            g += 2 * lam * float(h.value(x)) * np.asarray(h.gradient(x), dtype=float)
        return g

    def hessian(x):
        n = x.size
        H = np.asarray(f.hessian(x), dtype=float).copy() if f.hessian is not None else np.zeros((n, n))
        for c, hinge in [(y, True) for y in ys] + [(h, False) for h in hs]:
            v = float(c.value(x))
            if hinge and v <= 0:
                continue
            gc = np.asarray(c.gradient(x), dtype=float)
            Hc = np.asarray(c.hessian(x), dtype=float) if c.hessian is not None else np.zeros((n, n))
            H += 2 * lam * (np.outer(gc, gc) + v * Hc)
        return H

    return Oracle(value=value, gradient=gradient, hessian=hessian)


def exact_penalty(problem: Problem, x, lambda_pen: float, eq: Sequence[Oracle] = ()) -> float:
    """``f(x) + lambda (sum max(y_i, 0)^2 + sum |h_i|^2)``.

    Equality terms come from ``problem.eq_affine`` and the extra oracles ``eq``.
    """
    if lambda_pen < 0:
        raise ParameterError("lambda_pen must be nonnegative")
    x = np.asarray(x, dtype=float)
    v = float(problem.oracle.value(x))
    if lambda_pen == 0:
        return v
    viol = sum(max(float(y.value(x)), 0.0) ** 2 for y in problem.ineq)
    viol += sum(float(h.value(x)) ** 2 for h in _eq_oracles(problem, eq))
    return v + lambda_pen * viol


def _violation(problem, hs, x) -> float:
    v = 0.0
    for y in problem.ineq:
        v = max(v, float(y.value(x)))
    for h in hs:
        v = max(v, abs(float(h.value(x))))
    return v


# -- subproblem solvers -------------------------------------------------------

INNER_STOP = StopRule(grad_tol=1e-11, max_iters=5000)


def solve_box_subproblem(surrogate: Oracle, region: TrustRegion, x0) -> np.ndarray:
    # tolerance relative to the starting gradient: large penalties inflate it
    scale = max(1.0, float(np.linalg.norm(surrogate.gradient(np.asarray(x0, dtype=float)))))
    stop = StopRule(grad_tol=INNER_STOP.grad_tol * scale, max_iters=INNER_STOP.max_iters)
    rep = projected_gradient(Problem(surrogate, region.center.size), region.as_set(), x0,
                             ProxGradConfig(StepRule("armijo"), stop=stop, warm_start=True))
    if rep.status == "diverged":
        raise DescentForgeError("projected gradient diverged on the surrogate")
    return rep.x


def solve_ellipse_subproblem(surrogate: Oracle, region: TrustRegion, x0) -> np.ndarray:
    from .newton_barrier import BarrierConfig, interior_point

    c, P, r = region.center, region.P, float(region.radius)
    Pinv = solve_linear(P, np.eye(c.size))
    con = Oracle(value=lambda x: float((x - c) @ Pinv @ (x - c)) - r,
                 gradient=lambda x: 2 * Pinv @ (x - c), hessian=lambda x: 2 * Pinv)
    start = np.asarray(x0, dtype=float)
    if not con.value(start) < 0:
        start = c.copy()
    rep = interior_point(Problem(surrogate, c.size, ineq=(con,)), BarrierConfig(eps_gap=1e-10), start)
    if rep.status == "diverged":
        raise DescentForgeError("interior point diverged on the surrogate")
    return rep.x


def default_inner(surrogate: Oracle, region: TrustRegion, x0) -> np.ndarray:
    if region.kind == "box":
        return solve_box_subproblem(surrogate, region, x0)
    return solve_ellipse_subproblem(surrogate, region, x0)


# -- main loop ----------------------------------------------------------------

def scp_solve(problem: Problem, config: ScpConfig = ScpConfig(), region0: Optional[TrustRegion] = None,
              x0=None, inner_solver: Optional[Callable] = None, eq: Sequence[Oracle] = ()) -> Report:
    """Trust-region SCP on the exact-penalty merit ``phi``.

    Each iteration convexifies ``f`` and the inequalities (equalities are
    linearised), then minimises the penalised surrogate ``phi_hat`` over the
    trust region with ``inner_solver(surrogate, region, x_start)``.
    With ``delta_hat = phi(x) - phi_hat(x_hat)`` and
    ``delta = phi(x) - phi(x_hat)`` the step is accepted iff
    ``alpha delta_hat <= delta`` and ``delta_hat > 0``; the region is then
    scaled by ``beta``, else by ``gamma``. Shrinking below
    ``region_floor`` ends the run as converged. ``lambda_pen`` doubles when
    the constraint violation stalls for ``stall_window`` iterations; the
    region is then reset to at least its initial size.
    The recorded ``f`` is ``phi``; ``gnorm`` is ``max(||grad phi||, v)``
    where ``v`` is the constraint violation, so a penalty-only stationary
    point does not count as converged.
    """
    o = problem.oracle
    o.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    region = (region0 or TrustRegion.box(x, 1.0)).recentered(x)
    radius0 = region.radius
    if region.center.size != problem.d:
        raise ParameterError("trust region dimension must equal d")
    inner = inner_solver or default_inner
    ys = list(problem.ineq)
    hs = _eq_oracles(problem, eq)
    lam = config.lambda_pen

    def merit(lam):
        return _penalty_oracle(o, ys, hs, lam)

    phi = merit(lam)
    rec = Recorder(config.stop)
    f = phi.value(x)
    viol = _violation(problem, hs, x)
    best_viol, stall = viol, 0
    if rec.record(0, f, max(float(np.linalg.norm(phi.gradient(x))), viol), 0.0, radius=region.size, accepted=0.0,
                  violation=viol, lambda_pen=lam):
        return rec.report(x, region=region, lambda_pen=lam)
    k = 0
    while True:
        k += 1
        try:
            f_hat = convexify(o, x, config.mode)
            y_hat = [convexify(y, x, config.mode if y.hessian is not None else "affine") for y in ys]
            h_hat = [convexify(h, x, "affine") for h in hs]
            phi_hat = _penalty_oracle(f_hat, y_hat, h_hat, lam)
            x_hat = np.asarray(inner(phi_hat, region, x.copy()), dtype=float)
            if not finite(x_hat):
                raise DescentForgeError("inner solver returned a non-finite point")
        except DescentForgeError as e:
            return rec.report(x, "aborted", error=str(e), region=region, lambda_pen=lam)
        phi_x = phi.value(x)
        delta_hat = phi_x - phi_hat.value(x_hat)
        phi_new = phi.value(x_hat)
        delta = phi_x - phi_new
        tiny = 1e-14 * (1 + abs(phi_x))
        accepted = delta_hat > tiny and config.alpha * delta_hat <= delta
        if accepted:
            x = x_hat
            region = region.recentered(x).scaled(config.beta)
            viol = _violation(problem, hs, x)
        else:
            region = region.scaled(config.gamma)
        if viol > VIOLATION_TOL and viol > 0.99 * best_viol:
            stall += 1
        else:
            stall = 0
        best_viol = min(best_viol, viol)
        extras = dict(radius=region.size, accepted=float(accepted), delta_hat=delta_hat, delta=delta,
                      violation=viol, lambda_pen=lam)
        if stall >= config.stall_window and lam > 0:
            lam *= config.penalty_growth
            phi = merit(lam)
            # the stalled phase shrank the region; restart it at its initial size
            region = TrustRegion(region.kind, x, np.maximum(region.radius, radius0), region.P)
            stall = 0
            best_viol = viol
        f = phi.value(x)
        if region.size < config.region_floor:
            rec.record(k, f, max(float(np.linalg.norm(phi.gradient(x))), viol), float(accepted), **extras)
            return rec.report(x, "converged" if not rec.diverged else "diverged", region=region,
                              lambda_pen=lam, stop_reason="region_floor")
        if rec.record(k, f, max(float(np.linalg.norm(phi.gradient(x))), viol), float(accepted), **extras):
            return rec.report(x, region=region, lambda_pen=lam)
