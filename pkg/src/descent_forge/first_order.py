"""Full-gradient solvers: gradient descent (fixed, line-searched, momentum,
steepest) and the accelerated gradient method."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .core import ParameterError, Problem, Recorder, Report, StopRule, as_vector, finite
from .linesearch import StepRule
from .linsolve import largest_eigenvalue


@dataclass(frozen=True)
class GDConfig:
    step_rule: StepRule = field(default_factory=StepRule)
    momentum_alpha: float = 0.0
    stop: StopRule = field(default_factory=StopRule)

    def __post_init__(self):
        if self.momentum_alpha < 0:
            raise ParameterError("momentum_alpha must be nonnegative")


def two_over_k_gamma(k: int) -> float:
    """``0`` for ``k <= 3`` and ``2/k`` afterwards."""
    return 0.0 if k <= 3 else 2.0 / k


class NesterovGamma:
    """Classical accelerated sequence ``gamma_k = (1 - l_k) / l_{k+1}`` with
    ``l_0 = 0`` and ``l_{s} = (1 + sqrt(1 + 4 l_{s-1}^2)) / 2``.

    The values are nonpositive, so ``y`` extrapolates past ``x^{k+1}``.
    """

    def __init__(self):
        self._lam = [0.0, 1.0]

    def _l(self, s: int) -> float:
        while len(self._lam) <= s:
            l = self._lam[-1]
            self._lam.append((1 + math.sqrt(1 + 4 * l * l)) / 2)
        return self._lam[s]

    def __call__(self, k: int) -> float:
        return (1 - self._l(k + 1)) / self._l(k + 2)


GAMMA_SEQUENCES = {"two_over_k": lambda: two_over_k_gamma, "nesterov": NesterovGamma,
                   "zero": lambda: (lambda k: 0.0)}


def gamma_condition_holds(gamma: Callable[[int], float], K: int) -> bool:
    """Check ``prod_{i<=k} (1 - gamma_i) >= gamma_k^2`` for all ``k <= K``."""
    prod = 1.0
    for k in range(K + 1):
        g = gamma(k)
        prod *= 1 - g
        if prod < g * g - 1e-15:
            return False
    return True


@dataclass(frozen=True)
class AGMConfig:
    gamma_seq: Union[str, Callable[[int], float]] = "nesterov"
    step_rule: StepRule = field(default_factory=StepRule)
    stop: StopRule = field(default_factory=StopRule)

    def gamma(self) -> Callable[[int], float]:
        if callable(self.gamma_seq):
            return self.gamma_seq
        try:
            return GAMMA_SEQUENCES[self.gamma_seq]()
        except KeyError:
            raise ParameterError(f"unknown gamma sequence {self.gamma_seq!r}") from None


def estimate_L(problem: Problem, x0) -> float | None:
    if problem.L is not None:
        return problem.L
    if problem.oracle.hessian is not None:
        H = np.asarray(problem.oracle.hessian(x0), dtype=float)
        return largest_eigenvalue(H) or None
    return None


def resolve_step(problem: Problem, rule: StepRule, x0) -> tuple[StepRule, float | None]:
    """Fill in ``eta = 1/L`` for a fixed rule without an explicit step."""
    L = estimate_L(problem, x0) if rule.kind in ("fixed", "exact_1d") else problem.L
    if rule.kind == "fixed" and rule.eta is None:
        if L is None:
            raise ParameterError("fixed step needs eta, problem.L or a Hessian to estimate L")
        rule = StepRule.fixed(1.0 / L)
    return rule, L


def gradient_descent(problem: Problem, config: GDConfig = GDConfig(), x0=None) -> Report:
    """Gradient descent ``x+ = x + dx`` with ``dx = alpha dx_prev - eta grad``.

    With ``momentum_alpha=0`` this is plain gradient descent. The step size
    comes from ``config.step_rule`` applied along ``-grad``.
    """
    oracle = problem.oracle
    oracle.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rule, L = resolve_step(problem, config.step_rule, x)
    rec = Recorder(config.stop)
    f = oracle.value(x)
    g = np.asarray(oracle.gradient(x), dtype=float)
    if rec.record(0, f, np.linalg.norm(g), 0.0):
        return rec.report(x)
    dx = np.zeros_like(x)
    k = 0
    while True:
        eta, ok = rule.select(oracle, x, -g, f, g, L)
        dx = config.momentum_alpha * dx - eta * g
        x_new = x + dx
        f_new = oracle.value(x_new)
        g_new = np.asarray(oracle.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(x, "diverged")
        x, f, g = x_new, f_new, g_new
        extras = {} if ok else {"ls_fail": 1.0}
        if rec.record(k, f, np.linalg.norm(g), eta, **extras):
            return rec.report(x)


def agm(problem: Problem, config: AGMConfig = AGMConfig(), x0=None) -> Report:
    """Accelerated gradient method.

    ``x+ = y - eta grad f(y)`` and ``y+ = (1 - gamma_k) x+ + gamma_k x``.
    The reported sequence is ``x``; ``y`` is internal.
    """
    oracle = problem.oracle
    oracle.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rule, L = resolve_step(problem, config.step_rule, x)
    gamma = config.gamma()
    rec = Recorder(config.stop)
    y = x.copy()
    f = oracle.value(x)
    g = np.asarray(oracle.gradient(x), dtype=float)
    if rec.record(0, f, np.linalg.norm(g), 0.0, gamma=0.0):
        return rec.report(x)
    gy, fy = g, f
    k = 0
    while True:
        eta, ok = rule.select(oracle, y, -gy, fy, gy, L)
        x_new = y - eta * gy
        gk = gamma(k)
        y = (1 - gk) * x_new + gk * x
        f_new = oracle.value(x_new)
        g_new = np.asarray(oracle.gradient(x_new), dtype=float)
        k += 1
        if not finite(f_new, g_new, y):
            return rec.report(x, "diverged")
        x = x_new
        if gk == 0.0:
            fy, gy = f_new, g_new
        else:
            fy = oracle.value(y)
            gy = np.asarray(oracle.gradient(y), dtype=float)
        extras = {"gamma": gk} if ok else {"gamma": gk, "ls_fail": 1.0}
        if rec.record(k, f_new, np.linalg.norm(g_new), eta, **extras):
            return rec.report(x)
