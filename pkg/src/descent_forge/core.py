"""Shared types: oracles, problems, stopping rules, traces and reports."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]


# -- errors -------------------------------------------------------------------

class DescentForgeError(Exception):
    """Base class for all library errors."""


class ParameterError(DescentForgeError, ValueError):
    pass


class CapabilityError(DescentForgeError):
    """Oracle lacks a member (gradient, prox, lmo, ...) the solver needs."""


class EvaluationError(DescentForgeError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class SingularMatrixError(DescentForgeError):
    def __init__(self, message: str, pivot: int | None = None, block: str | None = None):
        super().__init__(message)
        self.pivot = pivot
        self.block = block


class DefinitenessError(DescentForgeError):
    pass


class RankError(DescentForgeError):
    pass


class FeasibilityError(DescentForgeError):
    def __init__(self, message: str, violated: Sequence[int] = ()):
        super().__init__(message)
        self.violated = list(violated)


class BracketError(DescentForgeError):
    pass


class NonDescentError(DescentForgeError):
    pass


class ConvergenceError(DescentForgeError):
    pass


# -- oracle / problem ---------------------------------------------------------

@dataclass(frozen=True)
class Oracle:
    """Callable bundle describing a function ``f``.

    Only ``value`` is mandatory. Solvers ask for the members they need via
    :meth:`require` and raise :class:`CapabilityError` otherwise.
    When ``term_count > 0`` the function is a finite sum
    ``f(x) = (1/n) sum_i f_i(x)``.
    """

    value: Callable[[Vector], float]
    gradient: Optional[Callable[[Vector], Vector]] = None
    hessian: Optional[Callable[[Vector], Matrix]] = None
    term_count: int = 0
    term_value: Optional[Callable[[int, Vector], float]] = None
    term_gradient: Optional[Callable[[int, Vector], Vector]] = None
    subgradient: Optional[Callable[[Vector], Vector]] = None
    term_subgradient: Optional[Callable[[int, Vector], Vector]] = None
    prox: Optional[Callable[[float, Vector], Vector]] = None
    lmo: Optional[Callable[[Vector], Vector]] = None
    project: Optional[Callable[[Vector], Vector]] = None

    def require(self, *members: str) -> None:
        missing = [m for m in members if getattr(self, m) is None]
        if missing:
            raise CapabilityError(f"oracle lacks required member(s): {', '.join(missing)}")


@dataclass(frozen=True)
class Problem:
    """Objective oracle plus constraints and metadata.

    ``ineq`` holds oracles for ``y_i(x) <= 0``; ``eq_affine`` is ``(A, b)``
    for ``Ax = b``. ``f_star``/``x_star`` are analytic optima when known.
    ``reg`` is an optional non-smooth term (a ``ProxSpec``) added to the
    oracle's value, and ``data`` any dataset the problem was built from.
    """

    oracle: Oracle
    d: int
    ineq: tuple[Oracle, ...] = ()
    eq_affine: Optional[tuple[Matrix, Vector]] = None
    sets: tuple[Any, ...] = ()
    L: Optional[float] = None
    mu: Optional[float] = None
    f_star: Optional[float] = None
    x_star: Optional[Vector] = None
    name: str = "problem"
    reg: Any = None
    data: Any = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ParameterError("dimension d must be positive")
        if self.L is not None and self.L <= 0:
            raise ParameterError("L must be positive")
        if self.mu is not None and self.mu < 0:
            raise ParameterError("mu must be nonnegative")
        if self.mu and self.L is not None and self.mu > self.L * (1 + 1e-12):
            raise ParameterError("mu must not exceed L")
        if self.eq_affine is not None:
            A, b = self.eq_affine
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if A.shape != (b.size, self.d):
                raise ParameterError(f"eq_affine shapes {A.shape} and {b.shape} do not match d={self.d}")
            object.__setattr__(self, "eq_affine", (A, b))
        object.__setattr__(self, "ineq", tuple(self.ineq))
        object.__setattr__(self, "sets", tuple(self.sets))

    def total_value(self, x) -> float:
        v = float(self.oracle.value(x))
        return v if self.reg is None else v + self.reg.value(x)

    @property
    def m1(self) -> int:
        return len(self.ineq)

    @property
    def m2(self) -> int:
        return 0 if self.eq_affine is None else self.eq_affine[0].shape[0]


# -- norms and gradient check -------------------------------------------------

def norm(v, kind: str = "l2") -> float:
    """Vector or matrix norm.

    ``kind`` is one of ``l1``, ``l2``, ``linf``, ``frobenius`` or
    ``spectral``. For matrices ``l1``/``linf`` are the induced norms
    (max column / max row absolute sum).
    """
    a = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ParameterError("norm of non-finite input")
    if kind == "spectral":
        if a.ndim != 2:
            raise ParameterError("spectral norm requires a matrix")
        from .linsolve import svd

        s = svd(a).S
        return float(s[0]) if s.size else 0.0
    if kind == "frobenius" or (kind == "l2" and a.ndim == 1):
        return float(math.sqrt(float(np.sum(a * a))))
    if kind == "l1":
        if a.ndim == 2:
            return float(np.max(np.sum(np.abs(a), axis=0))) if a.size else 0.0
        return float(np.sum(np.abs(a)))
    if kind == "linf":
        if a.ndim == 2:
            return float(np.max(np.sum(np.abs(a), axis=1))) if a.size else 0.0
        return float(np.max(np.abs(a))) if a.size else 0.0
    if kind == "l2":
        return norm(a, "spectral")
    raise ParameterError(f"unknown norm kind {kind!r}")


def check_gradient(oracle: Oracle, x, h: float = 1e-5) -> float:
    """Max relative error of ``oracle.gradient`` against central differences.

    Each coordinate error is normalised by ``1 + |g_j|``.
    """
    oracle.require("gradient")
    if not 0 < h <= 1e-2:
        raise ParameterError("h must lie in (0, 1e-2]")
    x = np.asarray(x, dtype=float)
    g = np.asarray(oracle.gradient(x), dtype=float)
    worst = 0.0
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fp, fm = oracle.value(x + e), oracle.value(x - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise EvaluationError(f"non-finite value near x along coordinate {j}", index=j)
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(fd - g[j]) / (1 + abs(g[j])))
    return worst


# -- stopping and traces ------------------------------------------------------

@dataclass(frozen=True)
class StopRule:
    """Stopping criteria. A tolerance of 0 disables that criterion.

    ``max_iters`` counts trace records (iteration indices ``0..max_iters-1``);
    ``math.inf`` disables it.
    """

    grad_tol: float = 1e-6
    f_change_tol: float = 0.0
    grad_change_tol: float = 0.0
    max_iters: float = 1000

    def __post_init__(self) -> None:
        if min(self.grad_tol, self.f_change_tol, self.grad_change_tol) < 0:
            raise ParameterError("tolerances must be nonnegative")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")
        if not (self.grad_tol > 0 or self.f_change_tol > 0 or self.grad_change_tol > 0
                or math.isfinite(self.max_iters)):
            raise ParameterError("at least one stopping criterion must be enabled")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    f: float
    gnorm: Optional[float]
    step: float
    extras: dict = field(default_factory=dict)
    t_ms: float = 0.0

    def to_json(self, timing: bool = True) -> dict:
        return {
            "k": int(self.k),
            "f": _json_float(self.f),
            "gnorm": None if self.gnorm is None else _json_float(self.gnorm),
            "step": _json_float(self.step),
            "t_ms": float(self.t_ms) if timing else 0.0,
            "extras": {k: _json_float(v) for k, v in self.extras.items()},
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def stop_reason(rule: StopRule, prev: Optional[TraceRecord], curr: TraceRecord) -> Optional[str]:
    """Name of the first criterion that fires, or ``None``."""
    if prev is not None and curr.k <= prev.k:
        raise ParameterError("trace indices must increase")
    if rule.grad_tol > 0 and curr.gnorm is not None and curr.gnorm <= rule.grad_tol:
        return "grad_tol"
    if prev is not None:
        if rule.f_change_tol > 0 and abs(curr.f - prev.f) <= rule.f_change_tol:
            return "f_change_tol"
        if (rule.grad_change_tol > 0 and curr.gnorm is not None and prev.gnorm is not None
                and abs(curr.gnorm - prev.gnorm) <= rule.grad_change_tol):
            return "grad_change_tol"
    if curr.k + 1 >= rule.max_iters:
        return "max_iters"
    return None


def check_stop(rule: StopRule, prev: Optional[TraceRecord], curr: TraceRecord) -> bool:
    return stop_reason(rule, prev, curr) is not None


STATUSES = ("converged", "max_iters", "diverged", "aborted", "no_convergence")


@dataclass
class Report:
    x: Any
    status: str
    trace: list[TraceRecord]
    info: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.trace[-1].k if self.trace else 0

    @property
    def f(self) -> float:
        return self.trace[-1].f if self.trace else math.nan

    def summary(self) -> dict:
        x = np.asarray(self.x, dtype=float)
        return {
            "summary": True,
            "status": self.status,
            "iterations": self.iterations,
            "f": _json_float(self.f),
            "gnorm": None if not self.trace or self.trace[-1].gnorm is None
            else _json_float(self.trace[-1].gnorm),
            "x": [_json_float(v) for v in x.ravel()],
        }


class Recorder:
    """Collects trace records and applies a :class:`StopRule`.

    ``record`` returns ``True`` once the run should stop. A non-finite
    ``f`` or ``gnorm`` marks the run as diverged.
    """

    def __init__(self, stop: StopRule):
        self.stop = stop
        self.trace: list[TraceRecord] = []
        self.reason: Optional[str] = None
        self.diverged = False
        self._t0 = time.perf_counter()

    def record(self, k: int, f: float, gnorm: Optional[float], step: float, **extras) -> bool:
        rec = TraceRecord(int(k), float(f), None if gnorm is None else float(gnorm),
                          float(step), dict(extras), (time.perf_counter() - self._t0) * 1e3)
        if not math.isfinite(rec.f) or (rec.gnorm is not None and not math.isfinite(rec.gnorm)):
            self.diverged = True
            self.reason = "diverged"
            return True
        prev = self.trace[-1] if self.trace else None
        self.trace.append(rec)
        self.reason = stop_reason(self.stop, prev, rec)
        return self.reason is not None

    @property
    def status(self) -> str:
        if self.diverged:
            return "diverged"
        if self.reason is None or self.reason == "max_iters":
            return "max_iters"
        return "converged"

    def report(self, x, status: Optional[str] = None, **info) -> Report:
        info.setdefault("stop_reason", self.reason)
        return Report(np.array(x, dtype=float, copy=True), status or self.status,
                      self.trace, info)


def as_vector(x) -> Vector:
    v = np.array(x, dtype=float, copy=True).ravel() if np.ndim(x) <= 1 else np.array(x, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ParameterError("initial point must be finite")
    return v


def finite(*vals) -> bool:
    return all(np.all(np.isfinite(v)) for v in vals)
