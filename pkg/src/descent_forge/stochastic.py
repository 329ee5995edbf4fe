"""Finite-sum stochastic solvers: SGD, mini-batch SGD, SAG, SVRG, AdaGrad,
RMSProp and Adam.

Randomness comes from ``numpy.random.Generator(Philox(seed))``; Philox is a
counter-based 64-bit generator, so a run is fully determined by its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    Report,
    StopRule,
    as_vector,
    finite,
)

EMA_WINDOW = 20


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional stream tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class Schedule:
    """``inv_k`` gives ``eta/k``, ``inv_sqrt_k`` gives ``eta/sqrt(k)``,
    ``constant`` gives ``eta``; ``k`` starts at 1."""

    kind: str = "constant"
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("inv_k", "inv_sqrt_k", "constant"):
            raise ParameterError(f"unknown schedule {self.kind!r}")
        if self.eta <= 0:
            raise ParameterError("eta must be positive")

    def __call__(self, k: int) -> float:
        if self.kind == "inv_k":
            return self.eta / k
        if self.kind == "inv_sqrt_k":
            return self.eta / math.sqrt(k)
        return self.eta


@dataclass(frozen=True)
class StochConfig:
    schedule: Schedule = field(default_factory=Schedule)
    gamma: float = 0.9
    gamma1: float = 0.9
    gamma2: float = 0.999
    eps: float = 1e-8
    svrg_m: Optional[int] = None
    elementwise_v: bool = False
    stop: StopRule = field(default_factory=lambda: StopRule(grad_tol=0.0, max_iters=1000))
    seed: int = 0
    gnorm_source: str = "ema"  # "ema" of sampled norms or "full" gradient norm

    def __post_init__(self):
        for name in ("gamma", "gamma1", "gamma2"):
            if not 0 <= getattr(self, name) <= 1:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.eps < 0:
            raise ParameterError("eps must be nonnegative")
        if self.svrg_m is not None and self.svrg_m < 1:
            raise ParameterError("svrg_m must be at least 1")
        if self.gnorm_source not in ("ema", "full"):
            raise ParameterError("gnorm_source must be 'ema' or 'full'")


@dataclass(frozen=True)
class BatchPlan:
    n: int
    b: int
    mode: str = "without_replacement"
    seed: int = 0
    allow_partial: bool = False

    def __post_init__(self):
        if not 1 <= self.b <= self.n:
            raise ParameterError("batch size must satisfy 1 <= b <= n")
        if self.mode not in ("without_replacement", "with_replacement"):
            raise ParameterError(f"unknown sampling mode {self.mode!r}")


def sample_batches(plan: BatchPlan, epoch: int = 0) -> list[np.ndarray]:
    """Index sets for one epoch.

    Without replacement: a fresh permutation cut into ``n // b`` disjoint
    batches (the remainder is dropped unless ``allow_partial``). With
    replacement: ``n // b`` batches of ``b`` i.i.d. uniform indices.
    """
    rng = make_rng(plan.seed, 0x5A, epoch)
    nb = plan.n // plan.b
    if plan.mode == "with_replacement":
        return [rng.integers(0, plan.n, size=plan.b) for _ in range(nb)]
    perm = rng.permutation(plan.n)
    out = [perm[i * plan.b:(i + 1) * plan.b] for i in range(nb)]
    if plan.allow_partial and nb * plan.b < plan.n:
        out.append(perm[nb * plan.b:])
    return out


def _terms(problem: Problem) -> tuple[Oracle, int]:
    o = problem.oracle
    o.require("term_gradient")
    if o.term_count < 1:
        raise ParameterError("stochastic solvers need term_count >= 1")
    return o, o.term_count


def full_gradient(oracle: Oracle, x) -> np.ndarray:
    n = oracle.term_count
    return sum(np.asarray(oracle.term_gradient(i, x), dtype=float) for i in range(n)) / n


def gradient_variance(oracle: Oracle, x) -> float:
    """``sigma^2 = (1/n) sum_i ||grad f_i(x) - grad f(x)||^2``."""
    G = np.array([oracle.term_gradient(i, x) for i in range(oracle.term_count)], dtype=float)
    return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


class _Gnorm:
    """Either the full gradient norm or an EMA of sampled-gradient norms."""

    def __init__(self, oracle: Oracle, source: str):
        self.oracle, self.source = oracle, source
        self.ema: Optional[float] = None
        self.a = 2.0 / (EMA_WINDOW + 1)

    def sampled(self, g) -> None:
        v = float(np.linalg.norm(g))
        self.ema = v if self.ema is None else self.ema + self.a * (v - self.ema)

    def value(self, x) -> float:
        if self.source == "full":
            return float(np.linalg.norm(full_gradient(self.oracle, x)))
        return self.ema


def _start(problem, config, x0):
    oracle, n = _terms(problem)
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rec = Recorder(config.stop)
    gn = _Gnorm(oracle, config.gnorm_source)
    # the first record always carries the exact gradient norm
    init = float(np.linalg.norm(full_gradient(oracle, x)))
    return oracle, n, x, rec, gn, init


def sgd(problem: Problem, config: StochConfig = StochConfig(), x0=None) -> Report:
    """One uniformly sampled term per iteration: ``x+ = x - eta_k grad f_i(x)``."""
    oracle, n, x, rec, gn, g0 = _start(problem, config, x0)
    rng = make_rng(config.seed)
    if rec.record(0, oracle.value(x), g0, 0.0):
        return rec.report(x)
    k = 0
    while True:
        k += 1
        i = int(rng.integers(n))
        g = np.asarray(oracle.term_gradient(i, x), dtype=float)
        gn.sampled(g)
        eta = config.schedule(k)
        x_new = x - eta * g
        f = oracle.value(x_new)
        if not finite(f, x_new):
            return rec.report(x, "diverged")
        x = x_new
        if rec.record(k, f, gn.value(x), eta, sampled_index=i):
            return rec.report(x)


def minibatch_sgd(problem: Problem, config: StochConfig = StochConfig(), plan: Optional[BatchPlan] = None,
                  x0=None, track_error: bool = True) -> Report:
    """Mini-batch SGD over the batches of ``plan``, epoch after epoch.

    ``extras['e_norm2']`` is ``||g_B - grad f(x)||^2`` at the pre-step point.
    """
    oracle, n, x, rec, gn, g0 = _start(problem, config, x0)
    plan = plan or BatchPlan(n, 1, seed=config.seed)
    if plan.n != n:
        raise ParameterError("batch plan size does not match the term count")
    if rec.record(0, oracle.value(x), g0, 0.0):
        return rec.report(x)
    k = 0
    epoch = 0
    while True:
        for bid, batch in enumerate(sample_batches(plan, epoch)):
            k += 1
            g = sum(np.asarray(oracle.term_gradient(int(i), x), dtype=float) for i in batch) / len(batch)
            gn.sampled(g)
            extras = {"batch_id": float(bid), "epoch": float(epoch)}
            if track_error:
                extras["e_norm2"] = float(np.sum((g - full_gradient(oracle, x)) ** 2))
            eta = config.schedule(k)
            x_new = x - eta * g
            f = oracle.value(x_new)
            if not finite(f, x_new):
                return rec.report(x, "diverged")
            x = x_new
            if rec.record(k, f, gn.value(x), eta, **extras):
                return rec.report(x)
        epoch += 1


def minibatch_error_samples(oracle: Oracle, x, plan: BatchPlan, resamples: int) -> np.ndarray:
    """``||e_t||^2`` for ``resamples`` batches drawn under ``plan`` at fixed ``x``."""
    G = np.array([oracle.term_gradient(i, x) for i in range(oracle.term_count)], dtype=float)
    gbar = G.mean(axis=0)
    out = []
    epoch = 0
    while len(out) < resamples:
        for batch in sample_batches(plan, epoch):
            out.append(float(np.sum((G[batch].mean(axis=0) - gbar) ** 2)))
            if len(out) == resamples:
                break
        epoch += 1
    return np.array(out)


class SagTable:
    """Table of last-seen term gradients with a running sum."""

    def __init__(self, oracle: Oracle, x):
        self.oracle = oracle
        self.table = np.array([oracle.term_gradient(i, x) for i in range(oracle.term_count)], dtype=float)
        self.sum = self.table.sum(axis=0)

    def refresh(self, i: int, x) -> np.ndarray:
        g = np.asarray(self.oracle.term_gradient(i, x), dtype=float)
        self.sum = self.sum + (g - self.table[i])
        self.table[i] = g
        return g


def sag(problem: Problem, config: StochConfig = StochConfig(), x0=None) -> Report:
    """Stochastic average gradient.

    The table starts from all term gradients at ``x0``; each iteration
    refreshes one entry and steps by ``-(eta/n) * sum``.
    """
    oracle, n, x, rec, gn, g0 = _start(problem, config, x0)
    rng = make_rng(config.seed)
    table = SagTable(oracle, x)
    if rec.record(0, oracle.value(x), g0, 0.0):
        return rec.report(x)
    k = 0
    while True:
        k += 1
        j = int(rng.integers(n))
        g = table.refresh(j, x)
        gn.sampled(g)
        eta = config.schedule(k)
        x_new = x - (eta / n) * table.sum
        f = oracle.value(x_new)
        if not finite(f, x_new):
            return rec.report(x, "diverged")
        x = x_new
        if rec.record(k, f, gn.value(x), eta, sampled_index=j):
            return rec.report(x)


def svrg(problem: Problem, config: StochConfig = StochConfig(), x0=None) -> Report:
    """Stochastic variance reduced gradient; one trace record per outer loop.

    The recorded ``gnorm`` is always the full gradient norm at the snapshot.
    """
    oracle, n = _terms(problem)
    m = config.svrg_m or 2 * n
    rng = make_rng(config.seed)
    xt = as_vector(np.zeros(problem.d) if x0 is None else x0)
    rec = Recorder(config.stop)
    mu = full_gradient(oracle, xt)
    if rec.record(0, oracle.value(xt), np.linalg.norm(mu), 0.0):
        return rec.report(xt)
    k = 0
    inner = 0
    while True:
        k += 1
        x = xt.copy()
        for _ in range(m):
            inner += 1
            j = int(rng.integers(n))
            eta = config.schedule(inner)
            x = x - eta * (np.asarray(oracle.term_gradient(j, x), dtype=float)
                           - np.asarray(oracle.term_gradient(j, xt), dtype=float) + mu)
        f = oracle.value(x)
        if not finite(f, x):
            return rec.report(xt, "diverged")
        xt = x
        mu = full_gradient(oracle, xt)
        if rec.record(k, f, np.linalg.norm(mu), eta, inner_steps=float(m)):
            return rec.report(xt)


def adaptive_sgd(problem: Problem, config: StochConfig = StochConfig(), variant: str = "adam",
                 x0=None) -> Report:
    """AdaGrad, RMSProp or Adam on sampled term gradients.

    RMSProp and Adam keep a scalar ``v`` (squared gradient norm) unless
    ``config.elementwise_v``. A zero divisor (``eps=0`` with no gradient
    history) leaves the raw gradient step and sets ``extras['div_guard']``.
    """
    if variant not in ("adagrad", "rmsprop", "adam"):
        raise ParameterError(f"unknown variant {variant!r}")
    oracle, n, x, rec, gn, g0 = _start(problem, config, x0)
    rng = make_rng(config.seed)
    if rec.record(0, oracle.value(x), g0, 0.0):
        return rec.report(x)
    G = np.zeros_like(x)
    v = np.zeros_like(x) if config.elementwise_v else 0.0
    m = np.zeros_like(x)
    k = 0
    while True:
        k += 1
        i = int(rng.integers(n))
        g = np.asarray(oracle.term_gradient(i, x), dtype=float)
        gn.sampled(g)
        eta = config.schedule(k)
        sq = g * g if config.elementwise_v else float(g @ g)
        if variant == "adagrad":
            G = G + g * g
            denom, direction = np.sqrt(config.eps + G), g
        elif variant == "rmsprop":
            v = config.gamma * v + (1 - config.gamma) * sq
            denom, direction = np.sqrt(config.eps + v), g
        else:
            m = config.gamma1 * m + (1 - config.gamma1) * g
            v = config.gamma2 * v + (1 - config.gamma2) * sq
            c1 = 1 - config.gamma1 ** k
            c2 = 1 - config.gamma2 ** k
            m_hat = m / c1 if c1 > 0 else m
            v_hat = v / c2 if c2 > 0 else v
            denom, direction = np.sqrt(config.eps + v_hat), m_hat
        denom = np.asarray(denom, dtype=float)
        zero = denom == 0
        guard = bool(np.any(zero))
        if guard:
            denom = np.where(zero, 1.0, denom)
        x_new = x - eta * direction / denom
        f = oracle.value(x_new)
        if not finite(f, x_new):
            return rec.report(x, "diverged")
        x = x_new
        extras = {"sampled_index": i}
        if guard:
            extras["div_guard"] = 1.0
        if rec.record(k, f, gn.value(x), eta, **extras):
            return rec.report(x)
