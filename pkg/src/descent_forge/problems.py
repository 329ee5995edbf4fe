"""Built-in benchmark problems, dataset loading and problem transformations."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CapabilityError,
    DescentForgeError,
    Oracle,
    ParameterError,
    Problem,
    RankError,
)
from .linsolve import _complete_columns, largest_eigenvalue, solve_linear, svd, sym_eig
from .proximal import ProxSpec, soft_threshold
from .stochastic import make_rng

LOSSES = ("least_squares", "absolute", "hinge", "logistic")
KIND_TO_LOSS = {"ls": "least_squares", "abs": "absolute", "hinge": "hinge", "logistic": "logistic"}


class DataError(DescentForgeError):
    """Dataset file missing, unreadable or malformed."""


@dataclass(frozen=True)
class DatasetLS:
    """Rows ``a_i`` of ``A`` with labels ``l_i``."""

    A: np.ndarray
    labels: np.ndarray
    loss: str = "least_squares"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        l = np.atleast_1d(np.asarray(self.labels, dtype=float))
        if A.shape[0] != l.size:
            raise ParameterError(f"A has {A.shape[0]} rows but there are {l.size} labels")
        if self.loss not in LOSSES:
            raise ParameterError(f"unknown loss {self.loss!r}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(l))):
            raise ParameterError("data must be finite")
        if self.loss in ("hinge", "logistic") and not np.all(np.isin(l, (-1.0, 1.0))):
            raise ParameterError(f"{self.loss} loss needs labels in {{-1, +1}}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "labels", l)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


# -- data ---------------------------------------------------------------------

def load_csv(path: str, loss: str = "least_squares") -> DatasetLS:
    """Read a CSV file with a header row; the column ``label`` holds labels
    and every other column is a feature."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if "label" not in header:
        raise DataError(f"{path} has no 'label' column")
    j = header.index("label")
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as e:
        raise DataError(f"{path} contains a non-numeric entry: {e}") from e
    if table.ndim != 2 or table.shape[1] != len(header) or table.shape[0] == 0:
        raise DataError(f"{path} has ragged or empty rows")
    return DatasetLS(np.delete(table, j, axis=1), table[:, j], loss)


def synthetic_dataset(n: int, d: int, loss: str = "least_squares", seed: int = 0,
                      noise: float = 0.1) -> DatasetLS:
    """Gaussian design with labels from a random linear model.

    Classification losses use ``sign(a^T w + noise)`` labels, which keeps
    the classes overlapping so a finite minimiser exists.
    """
    if n < 1 or d < 1:
        raise ParameterError("n and d must be positive")
    rng = make_rng(seed, 1)
    A = rng.standard_normal((n, d))
    w = rng.standard_normal(d) / math.sqrt(d)
    z = A @ w
    if loss in ("hinge", "logistic"):
        l = np.where(z + max(noise, 0.5) * rng.standard_normal(n) >= 0, 1.0, -1.0)
    else:
        l = z + noise * rng.standard_normal(n)
    return DatasetLS(A, l, loss)


def random_spd(d: int, cond: float = 10.0, seed: int = 0) -> np.ndarray:
    """SPD matrix with eigenvalues spread log-uniformly over ``[1, cond]``."""
    rng = make_rng(seed, 2)
    G = rng.standard_normal((d, d))
    Q = sym_eig(G + G.T)[1]
    w = np.geomspace(1.0, cond, d) if d > 1 else np.array([1.0])
    return (Q * w) @ Q.T


# -- losses -------------------------------------------------------------------

def _loss_problem(data: DatasetLS, reduction: str = "mean") -> Problem:
    """Finite-sum loss ``(1/n) sum f_i`` (``reduction='sum'`` drops the 1/n)."""
    if reduction not in ("mean", "sum"):
        raise ParameterError("reduction must be 'mean' or 'sum'")
    A, l, n, d = data.A, data.labels, data.n, data.d
    w = 1.0 / n if reduction == "mean" else 1.0
    loss = data.loss
    AtA_max = largest_eigenvalue(A.T @ A)

    if loss == "least_squares":
        tv = lambda i, x: 0.5 * float(A[i] @ x - l[i]) ** 2
        tg = lambda i, x: float(A[i] @ x - l[i]) * A[i]
        value = lambda x: w * 0.5 * float(np.sum((A @ x - l) ** 2))
        grad = lambda x: w * (A.T @ (A @ x - l))
        hess = lambda x: w * (A.T @ A)
        oracle = Oracle(value, grad, hess, n, tv, tg)
        L = w * AtA_max
        x_star = f_star = mu = None
        if n >= d:
            evals = sym_eig(A.T @ A)[0]
            if evals[0] > 1e-12 * max(1.0, evals[-1]):
                mu = w * float(evals[0])
                x_star = solve_linear(A.T @ A, A.T @ l)
                f_star = value(x_star)
        return Problem(oracle, d, L=L if L > 0 else None, mu=mu, f_star=f_star, x_star=x_star,
                       name="ls", data=data)
    if loss == "absolute":
        tv = lambda i, x: abs(float(A[i] @ x - l[i]))
        ts = lambda i, x: float(np.sign(A[i] @ x - l[i])) * A[i]
        oracle = Oracle(value=lambda x: w * float(np.sum(np.abs(A @ x - l))), term_count=n, term_value=tv,
                        subgradient=lambda x: w * (A.T @ np.sign(A @ x - l)), term_subgradient=ts)
        return Problem(oracle, d, name="abs", data=data)
    if loss == "hinge":
        def ts(i, x):
            return -l[i] * A[i] if 1 - l[i] * float(A[i] @ x) > 0 else np.zeros(d)
        oracle = Oracle(value=lambda x: w * float(np.sum(np.maximum(0.0, 1 - l * (A @ x)))), term_count=n,
                        term_value=lambda i, x: max(0.0, 1 - l[i] * float(A[i] @ x)),
                        subgradient=lambda x: w * (A.T @ np.where(1 - l * (A @ x) > 0, -l, 0.0)),
                        term_subgradient=ts)
        return Problem(oracle, d, name="hinge", data=data)
    # logistic: log(1 + exp(-l a^T x))
    def value(x):
        return w * float(np.sum(np.logaddexp(0.0, -l * (A @ x))))

    def sig(z):
        return 0.5 * (1 + np.tanh(0.5 * z))  # overflow-free logistic

    def grad(x):
        return w * (A.T @ (-l * sig(-l * (A @ x))))

    def hess(x):
        s = sig(l * (A @ x))
        return w * (A.T * (s * (1 - s))) @ A

    oracle = Oracle(value, grad, hess, n,
                    term_value=lambda i, x: float(np.logaddexp(0.0, -l[i] * float(A[i] @ x))),
                    term_gradient=lambda i, x: -l[i] * float(sig(-l[i] * float(A[i] @ x))) * A[i])
    L = 0.25 * w * AtA_max
    return Problem(oracle, d, L=L if L > 0 else None, name="logistic", data=data)


def lasso_problem(X, y, lam: float) -> Problem:
    """``0.5 ||y - X beta||^2 + lam ||beta||_1``: smooth part as the oracle,
    the l1 term as ``reg``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ParameterError("X and y disagree in length")
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    oracle = Oracle(value=lambda b: 0.5 * float(np.sum((y - X @ b) ** 2)),
                    gradient=lambda b: X.T @ (X @ b - y), hessian=lambda b: X.T @ X)
    x_star = f_star = None
    if X.shape[0] == X.shape[1] and np.allclose(X.T @ X, np.eye(X.shape[1]), atol=1e-12):
        # orthonormal design: beta* = s_lam(X^T y)
        x_star = soft_threshold(X.T @ y, lam)
        f_star = 0.5 * float(np.sum((y - X @ x_star) ** 2)) + lam * float(np.sum(np.abs(x_star)))
    L = largest_eigenvalue(X.T @ X)
    return Problem(oracle, X.shape[1], L=L if L > 0 else None, f_star=f_star, x_star=x_star, name="lasso",
                   reg=ProxSpec.l1(lam), data=DatasetLS(X, y))


def affine_constraint(a, c: float) -> Oracle:
    """``a^T x - c <= 0`` as a constraint oracle."""
    a = np.asarray(a, dtype=float)
    n = a.size
    return Oracle(value=lambda x: float(a @ x) - c, gradient=lambda x: a.copy(),
                  hessian=lambda x: np.zeros((n, n)))


def qp_problem(P, q, r: float = 0.0, G=None, h=None, A=None, b=None) -> Problem:
    """``0.5 x^T P x + q^T x + r`` s.t. ``G x <= h``, ``A x = b``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float)
    d = q.size
    if P.shape != (d, d):
        raise ParameterError("P must be d x d")
    P = 0.5 * (P + P.T)
    oracle = Oracle(value=lambda x: 0.5 * float(x @ P @ x) + float(q @ x) + r,
                    gradient=lambda x: P @ x + q, hessian=lambda x: P.copy())
    ineq = ()
    if G is not None and np.size(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if G.shape != (h.size, d):
            raise ParameterError("G and h shapes disagree")
        ineq = tuple(affine_constraint(g, hi) for g, hi in zip(G, h))
    eq = None
    if A is not None and np.size(A):
        eq = (A, b)
    evals = sym_eig(P)[0]
    L = float(evals[-1]) if evals[-1] > 0 else None
    mu = float(max(evals[0], 0.0))
    x_star = f_star = None
    if not ineq and eq is None and evals[0] > 1e-12 * max(1.0, evals[-1]):
        x_star = solve_linear(P, -q)
        f_star = oracle.value(x_star)
    return Problem(oracle, d, ineq=ineq, eq_affine=eq, L=L, mu=mu, f_star=f_star, x_star=x_star, name="qp")


def box_qp_optimum(P, q, lo, hi) -> tuple[np.ndarray, float]:
    """Exact minimiser of a strictly convex QP over a box by enumerating
    all ``3^d`` active sets (tiny ``d`` only)."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = q.size
    best, best_f = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=d):  # free / at lo / at hi
        x = np.where(np.array(pattern) == 1, lo, hi).astype(float)
        free = [j for j in range(d) if pattern[j] == 0]
        if free:
            fixed = [j for j in range(d) if pattern[j] != 0]
            rhs = -q[free] - P[np.ix_(free, fixed)] @ x[fixed]
            x[free] = solve_linear(P[np.ix_(free, free)], rhs)
        if np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12):
            f = 0.5 * x @ P @ x + q @ x
            if f < best_f:
                best, best_f = x, float(f)
    return best, best_f


# -- named toys ---------------------------------------------------------------

def _named(kind: str, seed: int, params: dict) -> Problem:
    if kind == "quadratic":
        d = int(params.get("d", 10))
        P = random_spd(d, float(params.get("cond", 10.0)), seed)
        q = make_rng(seed, 3).standard_normal(d)
        p = qp_problem(P, q)
        return Problem(p.oracle, d, L=p.L, mu=p.mu, f_star=p.f_star, x_star=p.x_star, name="quadratic")
    if kind == "barrier_1d":
        # min x  s.t.  -x <= 0
        o = Oracle(lambda x: float(x[0]), lambda x: np.array([1.0]), lambda x: np.zeros((1, 1)))
        return Problem(o, 1, ineq=(affine_constraint([-1.0], 0.0),), f_star=0.0, x_star=np.zeros(1),
                       name="barrier_1d")
    if kind == "box_qp":
        P = np.asarray(params.get("P", [[2.0, 0.5], [0.5, 1.0]]), dtype=float)
        q = np.asarray(params.get("q", [-4.0, 1.0]), dtype=float)
        lo = np.asarray(params.get("lo", [0.0, 0.0]), dtype=float)
        hi = np.asarray(params.get("hi", [1.0, 1.0]), dtype=float)
        d = q.size
        G = np.vstack([np.eye(d), -np.eye(d)])
        h = np.concatenate([hi, -lo])
        p = qp_problem(P, q, G=G, h=h)
        x_star, f_star = box_qp_optimum(P, q, lo, hi)
        return Problem(p.oracle, d, ineq=p.ineq, L=p.L, mu=p.mu, f_star=f_star, x_star=x_star, name="box_qp")
    if kind == "equality_toy":
        # min 0.5 ||x||^2  s.t.  x1 + x2 = 1
        o = Oracle(lambda x: 0.5 * float(x @ x), lambda x: x.copy(), lambda x: np.eye(2))
        return Problem(o, 2, eq_affine=(np.ones((1, 2)), np.ones(1)), L=1.0, mu=1.0, f_star=0.25,
                       x_star=np.full(2, 0.5), name="equality_toy")
    if kind == "consensus_average":
        c = np.asarray(params.get("c", [1.0, 2.0, 6.0]), dtype=float)
        m = c.size
        o = Oracle(lambda x: 0.5 * float(np.sum((x[0] - c) ** 2)), lambda x: np.array([m * x[0] - c.sum()]),
                   lambda x: np.array([[float(m)]]), m,
                   term_value=lambda i, x: 0.5 * float(x[0] - c[i]) ** 2,
                   term_gradient=lambda i, x: np.array([x[0] - c[i]]))
        xs = np.array([c.mean()])
        return Problem(o, 1, L=float(m), mu=float(m), f_star=o.value(xs), x_star=xs, name="consensus_average",
                       data=c)
    if kind == "orthonormal_lasso":
        y = np.asarray(params.get("y", make_rng(seed, 4).standard_normal(int(params.get("d", 5)))), dtype=float)
        return lasso_problem(np.eye(y.size), y, float(params.get("lam", 0.5)))
    if kind == "rosenbrock":
        a, b = float(params.get("a", 1.0)), float(params.get("b", 100.0))
        o = Oracle(
            lambda x: (a - x[0]) ** 2 + b * (x[1] - x[0] ** 2) ** 2,
            lambda x: np.array([-2 * (a - x[0]) - 4 * b * x[0] * (x[1] - x[0] ** 2), 2 * b * (x[1] - x[0] ** 2)]),
            lambda x: np.array([[2 - 4 * b * (x[1] - 3 * x[0] ** 2), -4 * b * x[0]], [-4 * b * x[0], 2 * b]]),
        )
        return Problem(o, 2, f_star=0.0, x_star=np.array([a, a * a]), name="rosenbrock")
    if kind == "quartic_1d":
        # x^4 - x^2: local minimisers at +-1/sqrt(2)
        o = Oracle(lambda x: float(x[0] ** 4 - x[0] ** 2), lambda x: np.array([4 * x[0] ** 3 - 2 * x[0]]),
                   lambda x: np.array([[12 * x[0] ** 2 - 2]]))
        return Problem(o, 1, f_star=-0.25, name="quartic_1d")
    raise ParameterError(f"unknown problem kind {kind!r}")


NAMED = ("quadratic", "barrier_1d", "box_qp", "equality_toy", "consensus_average", "orthonormal_lasso",
         "rosenbrock", "quartic_1d")
KINDS = ("ls", "abs", "hinge", "logistic", "lasso", "qp") + NAMED


def make_problem(kind: str, data=None, seed: int = 0, **params) -> Problem:
    """Build a problem by name.

    ``data`` is a :class:`DatasetLS`, a pair ``(A, labels)``, a CSV path or
    ``None`` (a synthetic dataset from ``n``, ``d``, ``seed``). Loss problems
    use the ``(1/n) sum`` scaling unless ``reduction='sum'``. ``lasso`` takes
    ``lam``; ``qp`` takes ``P, q, r, G, h, A, b``.
    """
    if kind in NAMED:
        return _named(kind, seed, params)
    if kind == "qp":
        return qp_problem(params["P"], params["q"], params.get("r", 0.0), params.get("G"), params.get("h"),
                          params.get("A"), params.get("b"))
    if kind not in KIND_TO_LOSS and kind != "lasso":
        raise ParameterError(f"unknown problem kind {kind!r}")
    loss = KIND_TO_LOSS.get(kind, "least_squares")
    if data is None:
        ds = synthetic_dataset(int(params.get("n", 100)), int(params.get("d", 10)), loss, seed,
                               float(params.get("noise", 0.1)))
    elif isinstance(data, str):
        ds = load_csv(data, loss)
    elif isinstance(data, DatasetLS):
        ds = DatasetLS(data.A, data.labels, loss)
    else:
        ds = DatasetLS(data[0], data[1], loss)
    if kind == "lasso":
        return lasso_problem(ds.A, ds.labels, float(params.get("lam", 0.1)))
    return _loss_problem(ds, params.get("reduction", "mean"))


# -- transformations ----------------------------------------------------------

def _compose(o: Oracle, x0, C) -> Oracle:
    """``u -> o(x0 + C u)``."""
    lift = lambda u: x0 + C @ u
    return Oracle(
        value=lambda u: o.value(lift(u)),
        gradient=None if o.gradient is None else (lambda u: C.T @ np.asarray(o.gradient(lift(u)), dtype=float)),
        hessian=None if o.hessian is None else (lambda u: C.T @ np.asarray(o.hessian(lift(u)), dtype=float) @ C),
        subgradient=None if o.subgradient is None else
        (lambda u: C.T @ np.asarray(o.subgradient(lift(u)), dtype=float)),
    )


def null_space(A, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """``(A^+, C)``: pseudo-inverse and an orthonormal basis of ``null(A)``,
    both from the thin SVD. ``A`` must have full row rank ``m < d``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, d = A.shape
    if m >= d:
        raise RankError(f"A ({m}x{d}) must have fewer rows than columns")
    r = svd(A)
    if r.S.size < m or r.S[-1] <= rtol * max(1.0, r.S[0]):
        raise RankError(f"A ({m}x{d}) is rank deficient")
    pinv = (r.V / r.S) @ r.U.T
    # complete the row-space basis V to an orthonormal basis of R^d
    full = _complete_columns(np.hstack([r.V, np.zeros((d, d - m))]), [True] * m + [False] * (d - m))
    return pinv, full[:, m:]


def eliminate_equality(problem: Problem) -> tuple[Problem, Callable]:
    """Substitute ``x = A^+ b + C u`` with ``C`` an orthonormal null-space basis.

    Returns the reduced problem over ``u`` and ``lift(u) -> x``.
    """
    if problem.eq_affine is None:
        return problem, (lambda u: np.asarray(u, dtype=float).copy())
    A, b = problem.eq_affine
    pinv, C = null_space(A)
    x0 = pinv @ np.asarray(b, dtype=float)
    lift = lambda u: x0 + C @ np.asarray(u, dtype=float)
    reduced = Problem(_compose(problem.oracle, x0, C), C.shape[1],
                      ineq=tuple(_compose(c, x0, C) for c in problem.ineq),
                      f_star=problem.f_star, name=problem.name + "_reduced")
    return reduced, lift


def _pad(o: Oracle, d: int, extra: int) -> Oracle:
    """Lift an oracle of ``x`` to one of ``(x, z)`` that ignores ``z``."""
    n = d + extra

    def grad(v):
        g = np.zeros(n)
        g[:d] = o.gradient(v[:d])
        return g

    def hess(v):
        H = np.zeros((n, n))
        if o.hessian is not None:
            H[:d, :d] = o.hessian(v[:d])
        return H

    return Oracle(value=lambda v: o.value(v[:d]), gradient=None if o.gradient is None else grad, hessian=hess)


def _affine_parts(c: Oracle, d: int) -> tuple[np.ndarray, float]:
    if c.hessian is not None:
        probe = make_rng(0, 5).standard_normal(d)
        if np.any(np.asarray(c.hessian(probe)) != 0):
            raise CapabilityError("slack form with equality constraints needs affine inequalities")
    g = np.asarray(c.gradient(np.zeros(d)), dtype=float)
    return g, float(c.value(np.zeros(d)))


def add_slack(problem: Problem) -> Problem:
    """Replace ``y_i(x) <= 0`` by ``y_i(x) + xi_i = 0`` with ``xi >= 0``.

    Variables become ``(x, xi)`` of size ``d + m1``. The inequalities must
    be affine so the new equalities fit ``eq_affine``.
    """
    m1, d = problem.m1, problem.d
    if m1 == 0:
        return problem
    rows, rhs = [], []
    for i, c in enumerate(problem.ineq):
        g, c0 = _affine_parts(c, d)
        e = np.zeros(m1)
        e[i] = 1.0
        rows.append(np.concatenate([g, e]))
        rhs.append(-c0)
    A, b = np.array(rows), np.array(rhs)
    if problem.eq_affine is not None:
        A0, b0 = problem.eq_affine
        A = np.vstack([A, np.hstack([A0, np.zeros((A0.shape[0], m1))])])
        b = np.concatenate([b, b0])
    nonneg = tuple(affine_constraint(-np.eye(d + m1)[d + i], 0.0) for i in range(m1))
    return Problem(_pad(problem.oracle, d, m1), d + m1, ineq=nonneg, eq_affine=(A, b),
                   f_star=problem.f_star, name=problem.name + "_slack")


def slack_point(problem: Problem, x) -> np.ndarray:
    """Feasible witness ``(x, -y(x))`` for the slack form."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, [-float(c.value(x)) for c in problem.ineq]])


def epigraph_form(problem: Problem) -> Problem:
    """Minimise ``t`` over ``(x, t)`` subject to ``f(x) - t <= 0`` and the
    original constraints."""
    d = problem.d
    o = problem.oracle
    e_t = np.zeros(d + 1)
    e_t[d] = 1.0

    def cvalue(v):
        return float(o.value(v[:d])) - v[d]

    def cgrad(v):
        g = np.zeros(d + 1)
        g[:d] = o.gradient(v[:d])
        g[d] = -1.0
        return g

    def chess(v):
        H = np.zeros((d + 1, d + 1))
        if o.hessian is not None:
            H[:d, :d] = o.hessian(v[:d])
        return H

    epi = Oracle(cvalue, cgrad, chess)
    ineq = (epi,) + tuple(_pad(c, d, 1) for c in problem.ineq)
    eq = None
    if problem.eq_affine is not None:
        A, b = problem.eq_affine
        eq = (np.hstack([A, np.zeros((A.shape[0], 1))]), b)
    objective = Oracle(value=lambda v: float(v[d]), gradient=lambda v: e_t.copy(),
                       hessian=lambda v: np.zeros((d + 1, d + 1)))
    return Problem(objective, d + 1, ineq=ineq, eq_affine=eq, f_star=problem.f_star,
                   name=problem.name + "_epigraph")
