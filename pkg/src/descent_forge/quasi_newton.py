"""Dense quasi-Newton updates (BFGS, DFP, Broyden, SR1) and LBFGS."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import ParameterError, Problem, Recorder, Report, StopRule, as_vector, finite
from .linesearch import armijo_backtracking, wolfe_search
from .linsolve import solve_linear

VARIANTS = ("bfgs", "dfp", "broyden", "sr1")
SKIP_RTOL = 1e-8
CURVATURE_RTOL = 1e-12


@dataclass(frozen=True)
class QNState:
    """``matrix`` is ``B`` (``track='hessian'``) or ``H`` (``track='inverse'``)."""

    matrix: np.ndarray
    variant: str = "bfgs"
    track: str = "inverse"
    skipped: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.track not in ("hessian", "inverse"):
            raise ParameterError(f"unknown track {self.track!r}")

    def direction(self, g):
        if self.track == "inverse":
            return -self.matrix @ g
        return -solve_linear(self.matrix, g, "auto")


def _bfgs_B(B, s, y):
    Bs = B @ s
    return B + np.outer(y, y) / (y @ s) - np.outer(Bs, Bs) / (s @ Bs)


def _bfgs_H(H, s, y):
    rho = 1.0 / (y @ s)
    V = np.eye(s.size) - rho * np.outer(y, s)
    return V.T @ H @ V + rho * np.outer(s, s)


def _dfp_B(B, s, y):
    rho = 1.0 / (y @ s)
    V = np.eye(s.size) - rho * np.outer(y, s)
    return V @ B @ V.T + rho * np.outer(y, y)


def _dfp_H(H, s, y):
    Hy = H @ y
    return H + np.outer(s, s) / (y @ s) - np.outer(Hy, Hy) / (y @ Hy)


def qn_update(state: QNState, s, y) -> QNState:
    """One secant update. Degenerate SR1/Broyden denominators (relative
    size below ``1e-8``) skip the update and set ``skipped``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    M = state.matrix
    if s.shape != (M.shape[0],) or y.shape != s.shape:
        raise ParameterError("s and y must match the state dimension")
    v, hess = state.variant, state.track == "hessian"
    skip = lambda: replace(state, skipped=True)
    if v in ("bfgs", "dfp"):
        if y @ s == 0:
            return skip()
        if v == "bfgs":
            new = _bfgs_B(M, s, y) if hess else _bfgs_H(M, s, y)
        else:
            new = _dfp_B(M, s, y) if hess else _dfp_H(M, s, y)
    elif v == "sr1":
        # B: (y - Bs)(y - Bs)^T / ((y - Bs)^T s); H: roles of s and y swapped
        a, b = (y, s) if hess else (s, y)
        r = a - M @ b
        den = r @ b
        if abs(den) < SKIP_RTOL * np.linalg.norm(r) * np.linalg.norm(b) or den == 0:
            return skip()
        new = M + np.outer(r, r) / den
    else:
        if hess:
            den = s @ s
            if den == 0:
                return skip()
            new = M + np.outer(y - M @ s, s) / den
        else:
            Hy = M @ y
            den = s @ Hy
            if abs(den) < SKIP_RTOL * np.linalg.norm(s) * np.linalg.norm(Hy) or den == 0:
                return skip()
            new = M + np.outer(s - Hy, s @ M) / den
    if v != "broyden":
        new = 0.5 * (new + new.T)
    return QNState(new, v, state.track, False)


def _fallback(oracle, x, f, g):
    r = armijo_backtracking(oracle, x, -g, fx=f, gx=g)
    return -g, r.eta


def qn_solve(problem: Problem, variant: str = "bfgs", x0=None, stop: StopRule = StopRule(),
             track: str = "inverse", c1: float = 1e-4, c2: float = 0.9, strong: bool = False) -> Report:
    """Quasi-Newton iteration ``p = -H grad``, Wolfe step, secant update.

    Starts from ``H = I``. ``strong`` with a small ``c2`` makes the search
    close to exact, which recovers near finite termination on quadratics. A non-descent direction or a failed line search
    falls back to a backtracked steepest-descent step (``extras['fallback']``).
    ``info`` holds the final ``state`` and the list ``steps`` of ``s``.
    """
    o = problem.oracle
    o.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    state = QNState(np.eye(x.size), variant, track)
    rec = Recorder(stop)
    f = o.value(x)
    g = np.asarray(o.gradient(x), dtype=float)
    steps = []
    if rec.record(0, f, np.linalg.norm(g), 0.0):
        return rec.report(x, state=state, steps=steps)
    k = 0
    while True:
        extras = {}
        p = state.direction(g)
        ls = wolfe_search(o, x, p, c1, c2, strong, fx=f, gx=g) if g @ p < 0 else None
        if ls is not None and ls.satisfied:
            eta = ls.eta
        else:
            p, eta = _fallback(o, x, f, g)
            extras["fallback"] = 1.0
        x_new = x + eta * p
        f_new = o.value(x_new)
        g_new = np.asarray(o.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(x, "diverged", state=state, steps=steps)
        s, y = x_new - x, g_new - g
        if variant in ("bfgs", "dfp") and s @ y <= CURVATURE_RTOL * np.linalg.norm(s) * np.linalg.norm(y):
            extras["skipped"] = 1.0
        else:
            state = qn_update(state, s, y)
            if state.skipped:
                extras["skipped"] = 1.0
            else:
                steps.append(s)
        x, f, g = x_new, f_new, g_new
        if rec.record(k, f, np.linalg.norm(g), eta, **extras):
            return rec.report(x, state=state, steps=steps)


@dataclass
class LbfgsMemory:
    """Ring buffer of ``(s, y, rho, gamma)`` with capacity ``m``.

    ``h0`` is the base scale used when the recursion bottoms out: the
    initial ``1/||grad f(x0)||`` while nothing has been evicted, otherwise
    the ``gamma`` of the most recently evicted pair.
    """

    m: int
    h0: float = 1.0
    pairs: list = field(default_factory=list)

    def push(self, s, y) -> bool:
        sy = float(s @ y)
        if sy <= CURVATURE_RTOL * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        gamma = sy / float(y @ y)
        self.pairs.append((s, y, 1.0 / sy, gamma))
        if len(self.pairs) > self.m:
            self.h0 = self.pairs.pop(0)[3]
        return True

    def get_direction(self, p, k: Optional[int] = None, n_recursion: int = 1, verbatim: bool = False):
        """Recursive two-sided product ``H^{(k)} p``.

        ``verbatim=True`` uses the printed closing term ``rho (s^T s) p``;
        the default ``rho (s^T p) s`` is the one consistent with BFGS.
        """
        if k is None:
            k = len(self.pairs)
        if k == 0 or n_recursion > self.m:
            return self.h0 * p
        s, y, rho, _ = self.pairs[k - 1]
        p_tilde = p - rho * (s @ p) * y
        p_hat = self.get_direction(p_tilde, k - 1, n_recursion + 1, verbatim)
        last = rho * (s @ s) * p if verbatim else rho * (s @ p) * s
        return p_hat - rho * (y @ p_hat) * s + last


def lbfgs_solve(problem: Problem, m: int = 10, x0=None, stop: StopRule = StopRule(),
                c1: float = 1e-4, c2: float = 0.9, verbatim: bool = False, strong: bool = False) -> Report:
    """Limited-memory BFGS with the recursive direction routine.

    ``p = GetDirection(-grad)`` is already a descent direction, so the
    update is ``x+ = x + eta p``.
    """
    if m < 1:
        raise ParameterError("memory m must be at least 1")
    o = problem.oracle
    o.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rec = Recorder(stop)
    f = o.value(x)
    g = np.asarray(o.gradient(x), dtype=float)
    gn0 = float(np.linalg.norm(g))
    mem = LbfgsMemory(m, 1.0 / gn0 if gn0 > 0 else 1.0)
    if rec.record(0, f, gn0, 0.0):
        return rec.report(x, memory=mem)
    k = 0
    while True:
        extras = {}
        p = mem.get_direction(-g, verbatim=verbatim)
        ls = wolfe_search(o, x, p, c1, c2, strong, fx=f, gx=g) if g @ p < 0 else None
        if ls is not None and ls.satisfied:
            eta = ls.eta
        else:
            p, eta = _fallback(o, x, f, g)
            extras["fallback"] = 1.0
        x_new = x + eta * p
        f_new = o.value(x_new)
        g_new = np.asarray(o.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(x, "diverged", memory=mem)
        if not mem.push(x_new - x, g_new - g):
            extras["skipped"] = 1.0
        x, f, g = x_new, f_new, g_new
        if rec.record(k, f, np.linalg.norm(g), eta, **extras):
            return rec.report(x, memory=mem)
