"""Step-size selection along a direction ``p`` from a point ``x``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import BracketError, NonDescentError, Oracle, ParameterError


@dataclass(frozen=True)
class LineSearchResult:
    eta: float
    evals: int
    satisfied: bool


def _value(oracle: Oracle, x) -> float:
    try:
        v = float(oracle.value(x))
    except (FloatingPointError, OverflowError, ValueError, ZeroDivisionError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def halving_search(oracle: Oracle, x, p, eta0: float = 1.0, max_halvings: int = 60,
                   fx: float | None = None) -> LineSearchResult:
    """Largest ``eta0 / 2**k`` (``k <= max_halvings``) with strict decrease."""
    if eta0 <= 0:
        raise ParameterError("eta0 must be positive")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    fx = oracle.value(x) if fx is None else fx
    eta = eta0
    for k in range(max_halvings + 1):
        if _value(oracle, x + eta * p) < fx:
            return LineSearchResult(eta, k + 1, True)
        if k < max_halvings:
            eta *= 0.5
    return LineSearchResult(eta, max_halvings + 1, False)


def armijo_backtracking(oracle: Oracle, x, p, eta0: float = 1.0, c: float = 1e-4,
                        shrink: float = 0.5, max_iters: int = 60,
                        fx: float | None = None, gx=None) -> LineSearchResult:
    """Backtrack until ``f(x + eta p) <= f(x) + c eta grad^T p``."""
    if not 0 < c <= 0.5:
        raise ParameterError("c must lie in (0, 0.5]")
    if not 0 < shrink < 1:
        raise ParameterError("shrink must lie in (0, 1)")
    if eta0 <= 0:
        raise ParameterError("eta0 must be positive")
    oracle.require("gradient")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    fx = oracle.value(x) if fx is None else fx
    gx = oracle.gradient(x) if gx is None else gx
    slope = float(np.dot(gx, p))
    if slope >= 0:
        raise NonDescentError(f"p is not a descent direction (grad^T p = {slope:g})")
    eta = eta0
    for k in range(max_iters + 1):
        if _value(oracle, x + eta * p) <= fx + c * eta * slope:
            return LineSearchResult(eta, k + 1, True)
        if k < max_iters:
            eta *= shrink
    return LineSearchResult(eta, max_iters + 1, False)


def wolfe_search(oracle: Oracle, x, p, c1: float = 1e-4, c2: float = 0.9, strong: bool = False,
                 eta0: float = 1.0, max_expansions: int = 50, max_bisections: int = 60,
                 fx: float | None = None, gx=None) -> LineSearchResult:
    """Bracket-then-bisect search for a (strong) Wolfe step.

    The step doubles while the curvature condition fails and no upper bound
    is known, then bisects the bracket. On exhaustion the best Armijo step
    found so far is returned with ``satisfied=False``.
    """
    if not 0 < c1 < c2 < 1:
        raise ParameterError("require 0 < c1 < c2 < 1")
    oracle.require("gradient")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    fx = oracle.value(x) if fx is None else fx
    gx = oracle.gradient(x) if gx is None else gx
    d0 = float(np.dot(gx, p))
    if d0 >= 0:
        raise NonDescentError(f"p is not a descent direction (grad^T p = {d0:g})")
    lo, hi = 0.0, math.inf
    eta = eta0
    evals = 0
    expansions = bisections = 0
    while True:
        xt = x + eta * p
        ft = _value(oracle, xt)
        evals += 1
        if ft > fx + c1 * eta * d0:
            hi = eta
        else:
            dt = float(np.dot(oracle.gradient(xt), p))
            if dt < c2 * d0:
                lo = eta
            elif strong and dt > -c2 * d0:
                hi = eta
            else:
                return LineSearchResult(eta, evals, True)
        if math.isinf(hi):
            if expansions >= max_expansions:
                break
            expansions += 1
            eta = 2 * lo
        else:
            if bisections >= max_bisections:
                break
            bisections += 1
            eta = 0.5 * (lo + hi)
    return LineSearchResult(lo if lo > 0 else eta, evals, False)


def bisection_min(df: Callable[[float], float], l: float, u: float, tol: float = 1e-10,
                  max_iters: int = 200) -> float:
    """Minimise a 1-D function through the sign change of its derivative."""
    if l == u:
        return l
    if l > u:
        raise BracketError("require l <= u")
    if not (df(l) < 0 <= df(u)):
        raise BracketError("derivative must satisfy df(l) < 0 <= df(u)")
    x = 0.5 * (l + u)
    for _ in range(max_iters):
        if u - l <= tol:
            break
        x = 0.5 * (l + u)
        if df(x) < 0:
            l = x
        else:
            u = x
    return 0.5 * (l + u)


def exact_step(oracle: Oracle, x, p, upper: float = 1.0, tol: float = 1e-14,
               max_expand: int = 100) -> float:
    """Exact minimiser of ``phi(eta) = f(x + eta p)`` over ``eta >= 0``.

    The bracket ``[0, upper]`` doubles until ``phi'`` changes sign.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    dphi = lambda e: float(np.dot(oracle.gradient(x + e * p), p))
    if dphi(0.0) >= 0:
        return 0.0
    u = upper
    for _ in range(max_expand):
        if dphi(u) >= 0:
            break
        u *= 2
    else:
        raise BracketError("could not bracket the 1-D minimiser")
    return bisection_min(dphi, 0.0, u, tol=tol * max(1.0, u))


@dataclass(frozen=True)
class StepRule:
    """Step-size rule shared by the gradient-type solvers.

    ``kind`` is ``fixed``, ``halving``, ``armijo``, ``wolfe`` or ``exact_1d``.
    A ``fixed`` rule with ``eta=None`` means ``1/L``.
    """

    kind: str = "fixed"
    eta: float | None = None
    eta0: float = 1.0
    c: float = 1e-4
    shrink: float = 0.5
    c1: float = 1e-4
    c2: float = 0.9
    strong: bool = False
    max_halvings: int = 60
    fallback_eta: float = 1e-16

    def __post_init__(self):
        if self.kind not in ("fixed", "halving", "armijo", "wolfe", "exact_1d"):
            raise ParameterError(f"unknown step rule {self.kind!r}")
        if self.eta is not None and self.eta <= 0:
            raise ParameterError("fixed step must be positive")

    @classmethod
    def fixed(cls, eta: float | None = None) -> "StepRule":
        return cls("fixed", eta)

    def select(self, oracle: Oracle, x, p, fx: float, gx, L: float | None = None):
        """Return ``(eta, satisfied)`` for a step along ``p``."""
        if self.kind == "fixed":
            if self.eta is None:
                raise ParameterError("fixed step needs eta or a resolved L")
            return self.eta, True
        if self.kind == "halving":
            r = halving_search(oracle, x, p, self.eta0, self.max_halvings, fx=fx)
        elif self.kind == "armijo":
            if np.dot(gx, p) >= 0:
                return self.fallback_eta, False
            r = armijo_backtracking(oracle, x, p, self.eta0, self.c, self.shrink,
                                    self.max_halvings, fx=fx, gx=gx)
        elif self.kind == "wolfe":
            if np.dot(gx, p) >= 0:
                return self.fallback_eta, False
            r = wolfe_search(oracle, x, p, self.c1, self.c2, self.strong, self.eta0, fx=fx, gx=gx)
        else:
            upper = 2.0 / L if L else 1.0
            eta = exact_step(oracle, x, p, upper=upper)
            return (eta, True) if eta > 0 else (self.fallback_eta, False)
        return (r.eta, True) if r.satisfied else (self.fallback_eta, False)
