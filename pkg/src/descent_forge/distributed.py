"""Multi-block and dual methods: alternating minimisation, dual ascent,
method of multipliers and the ADMM family.

Block updates inside one iteration only read a frozen snapshot of the
shared state, so they may run in parallel (``parallel=True`` uses a thread
pool). Dual variables are always updated after every primal block.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from .core import (
    ConvergenceError,
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
from .linesearch import armijo_backtracking
from .linsolve import back_sub, cholesky, forward_sub, solve_linear
from .proximal import ProxSpec, SetSpec, project, prox

DEFAULT_GD_STEPS = 5
EXACT_TOL = 1e-12
DIVERGENCE_WINDOW = 100


# -- inner solvers ------------------------------------------------------------

def _projected_step(o: Oracle, x, f, g, s: SetSpec, eta=1.0, shrink=0.5, max_iters=60):
    for _ in range(max_iters):
        xn = project(s, x - eta * g)
        d = xn - x
        fn = o.value(xn)
        if np.isfinite(fn) and fn <= f + g @ d + (d @ d) / (2 * eta):
            return xn
        eta *= shrink
    return xn


def inner_minimize(o: Oracle, x0, mode: Union[str, int] = DEFAULT_GD_STEPS,
                   s: Optional[SetSpec] = None, max_iters: int = 10000) -> np.ndarray:
    """Approximately minimise ``o`` starting at ``x0``.

    ``mode`` is ``'exact'`` (damped Newton when a Hessian exists, otherwise
    backtracking gradient descent to a tight tolerance) or an integer number
    of backtracking gradient steps. With a set ``s`` the steps are projected.
    Raises :class:`ConvergenceError` when an exact solve stalls.
    """
    x = np.array(x0, dtype=float)
    if s is not None:
        x = project(s, x)
    exact = mode == "exact"
    if not exact and (not isinstance(mode, (int, np.integer)) or mode < 0):
        raise ParameterError(f"inner mode must be 'exact' or a nonnegative int, got {mode!r}")
    steps = max_iters if exact else int(mode)
    newton = exact and s is None and o.hessian is not None
    if newton:
        steps = min(steps, 200)
    g0 = None
    for _ in range(steps):
        f = o.value(x)
        g = np.asarray(o.gradient(x), dtype=float)
        gn = float(np.linalg.norm(g))
        g0 = gn if g0 is None else g0
        if exact and gn <= EXACT_TOL * max(1.0, g0):
            return x
        if gn == 0:
            return x
        if s is not None:
            xn = _projected_step(o, x, f, g, s)
            if exact and np.linalg.norm(xn - x) <= EXACT_TOL * max(1.0, np.linalg.norm(x)):
                return xn
            x = xn
            continue
        p = -g
        if newton:
            try:
                p = -solve_linear(np.asarray(o.hessian(x), dtype=float), g)
            except DescentForgeError:
                p = -g
            if g @ p >= 0:
                p = -g
        ls = armijo_backtracking(o, x, p, fx=f, gx=g)
        x = x + ls.eta * p
        if not finite(x):
            raise ConvergenceError("inner solve produced non-finite iterate")
    if exact:
        gn = float(np.linalg.norm(o.gradient(x)))
        if s is None and gn > 1e-6 * max(1.0, g0 or 1.0):
            raise ConvergenceError(f"inner exact solve stalled at gradient norm {gn:.3g}")
    return x


def _add_quadratic(o: Oracle, M, v, rho) -> Oracle:
    """``f(x) + (rho/2) ||M x + v||^2``."""
    M = np.asarray(M, dtype=float)

    def value(x):
        r = M @ x + v
        return o.value(x) + 0.5 * rho * float(r @ r)

    def gradient(x):
        return np.asarray(o.gradient(x), dtype=float) + rho * M.T @ (M @ x + v)

    hess = None
    if o.hessian is not None:
        MtM = M.T @ M
        hess = lambda x: np.asarray(o.hessian(x), dtype=float) + rho * MtM
    return Oracle(value=value, gradient=gradient, hessian=hess)


# -- block problems -----------------------------------------------------------

@dataclass(frozen=True)
class Block:
    """One primal block.

    ``f`` is an :class:`Oracle` or a :class:`ProxSpec`. ``M`` is the block's
    coupling matrix (``A`` or ``B`` in ``A x1 + B x2 = c``; identity when
    omitted). ``ineq``/``eq`` are scalar constraint oracles ``y(x) <= 0`` and
    ``h(x) = 0``. ``inner`` is ``'exact'``, an integer number of gradient
    steps or a callable ``solver(v, rho, x_prev)`` returning the block
    minimiser of ``f(x) + (rho/2)||M x + v||^2``.
    """

    f: Union[Oracle, ProxSpec]
    size: int
    M: Optional[np.ndarray] = None
    set: Optional[SetSpec] = None
    ineq: tuple = ()
    eq: tuple = ()
    inner: Any = DEFAULT_GD_STEPS

    def __post_init__(self):
        if self.size < 1:
            raise ParameterError("block size must be positive")
        if self.M is not None:
            object.__setattr__(self, "M", np.atleast_2d(np.asarray(self.M, dtype=float)))
            if self.M.shape[1] != self.size:
                raise ParameterError("coupling matrix columns must equal block size")
        object.__setattr__(self, "ineq", tuple(self.ineq))
        object.__setattr__(self, "eq", tuple(self.eq))

    @property
    def coupling(self) -> np.ndarray:
        return np.eye(self.size) if self.M is None else self.M

    def value(self, x) -> float:
        return self.f.value(x) if isinstance(self.f, ProxSpec) else float(self.f.value(x))


@dataclass(frozen=True)
class BlockProblem:
    blocks: tuple
    coupling: str = "two_block"
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.coupling not in ("two_block", "general", "consensus"):
            raise ParameterError(f"unknown coupling {self.coupling!r}")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.coupling == "two_block":
            if len(self.blocks) != 2:
                raise ParameterError("two_block coupling needs exactly two blocks")
            rows = {b.coupling.shape[0] for b in self.blocks}
            c = np.zeros(rows.pop()) if self.c is None else np.asarray(self.c, dtype=float)
            if rows and c.size not in rows:
                raise ParameterError("coupling matrices must have the same number of rows")
            if c.size != self.blocks[0].coupling.shape[0]:
                raise ParameterError("c must match the coupling row count")
            object.__setattr__(self, "c", c)


def _scaled_identity(M) -> Optional[float]:
    n, m = M.shape
    if n != m:
        return None
    a = M[0, 0]
    return float(a) if a != 0 and np.array_equal(M, a * np.eye(n)) else None


def block_argmin(block: Block, v, rho: float, x_prev) -> np.ndarray:
    """Minimiser of ``f(x) + (rho/2)||M x + v||^2`` for one block."""
    if callable(block.inner):
        return np.asarray(block.inner(v, rho, x_prev), dtype=float)
    M = block.coupling
    a = _scaled_identity(M)
    f = block.f
    if a is not None and block.set is None:
        # prox_{g/(rho a^2)}(-v/a)
        if isinstance(f, ProxSpec):
            return prox(f, -v / a, 1.0 / (rho * a * a))
        if f.prox is not None:
            return np.asarray(f.prox(1.0 / (rho * a * a), -v / a), dtype=float)
    if isinstance(f, ProxSpec):
        raise ParameterError("a ProxSpec block needs a scaled-identity coupling or a callable inner solver")
    f.require("gradient")
    return inner_minimize(_add_quadratic(f, M, v, rho), x_prev, block.inner, block.set)


def _map_blocks(fn, items, parallel: bool):
    if parallel and len(items) > 1:
        with ThreadPoolExecutor(max_workers=len(items)) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# -- alternating minimisation -------------------------------------------------

def _split(sizes):
    edges = np.cumsum([0, *sizes])
    return [slice(int(edges[i]), int(edges[i + 1])) for i in range(len(sizes))]


def alternating_minimize(problem: Problem, sizes: Sequence[int], inner: Any = "exact",
                         proximal_lambda: Optional[float] = None, stop: StopRule = StopRule(), x0=None) -> Report:
    """Gauss-Seidel block minimisation of a joint objective.

    ``inner`` is one mode (``'exact'`` or an int of gradient steps) for all
    blocks, or a per-block list whose entries may also be callables
    ``solver(i, x, proximal_lambda) -> new block``. With ``proximal_lambda``
    each block objective gains ``||x_i - x_i^k||^2 / (2 lambda)``. A failing
    block ends the run with status ``aborted`` and ``info['failed_block']``.
    """
    if sum(sizes) != problem.d or min(sizes) < 1:
        raise ParameterError("block sizes must be positive and sum to d")
    if proximal_lambda is not None and proximal_lambda <= 0:
        raise ParameterError("proximal_lambda must be positive")
    o = problem.oracle
    slices = _split(sizes)
    modes = list(inner) if isinstance(inner, (list, tuple)) else [inner] * len(slices)
    if len(modes) != len(slices):
        raise ParameterError("one inner solver per block required")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)

    def block_oracle(i, x):
        sl = slices[i]
        anchor = x[sl].copy()
        lam = proximal_lambda

        def embed(z):
            full = x.copy()
            full[sl] = z
            return full

        def value(z):
            v = o.value(embed(z))
            return v + (0.0 if lam is None else float((z - anchor) @ (z - anchor)) / (2 * lam))

        def gradient(z):
            g = np.asarray(o.gradient(embed(z)), dtype=float)[sl]
            return g if lam is None else g + (z - anchor) / lam

        hess = None
        if o.hessian is not None:
            def hess(z):
                H = np.asarray(o.hessian(embed(z)), dtype=float)[sl, sl]
                return H if lam is None else H + np.eye(H.shape[0]) / lam
        return Oracle(value, gradient, hess)

    def gnorm(x):
        return float(np.linalg.norm(o.gradient(x))) if o.gradient is not None else None

    rec = Recorder(stop)
    if rec.record(0, o.value(x), gnorm(x), 0.0):
        return rec.report(x)
    k = 0
    while True:
        k += 1
        old = x.copy()
        for i, sl in enumerate(slices):
            try:
                if callable(modes[i]):
                    new = np.asarray(modes[i](i, x.copy(), proximal_lambda), dtype=float)
                else:
                    new = inner_minimize(block_oracle(i, x), x[sl], modes[i])
                if not finite(new):
                    raise ConvergenceError("non-finite block update")
            except (DescentForgeError, ArithmeticError) as e:
                return rec.report(x, "aborted", failed_block=i, error=str(e))
            x[sl] = new
        if rec.record(k, o.value(x), gnorm(x), float(np.linalg.norm(x - old))):
            return rec.report(x)


# -- dual ascent and method of multipliers ------------------------------------

def _lagrangian_oracle(o: Oracle, A, b, nu, rho: float) -> Oracle:
    """``f(x) + nu^T (Ax - b) + (rho/2)||Ax - b||^2``."""

    def value(x):
        r = A @ x - b
        return o.value(x) + float(nu @ r) + 0.5 * rho * float(r @ r)

    def gradient(x):
        return np.asarray(o.gradient(x), dtype=float) + A.T @ (nu + rho * (A @ x - b))

    hess = None
    if o.hessian is not None:
        AtA = A.T @ A
        hess = lambda x: np.asarray(o.hessian(x), dtype=float) + rho * AtA
    return Oracle(value, gradient, hess)


def _multiplier_loop(problem, step, rho, inner, stop, x0, nu0, blocks, parallel):
    if problem.eq_affine is None:
        raise ParameterError("problem needs equality constraints Ax = b")
    A, b = problem.eq_affine
    o = problem.oracle
    o.require("gradient")
    x = as_vector(np.zeros(problem.d) if x0 is None else x0)
    nu = np.zeros(b.size) if nu0 is None else np.array(nu0, dtype=float)
    if blocks is not None:
        oracles, sizes = zip(*blocks)
        if sum(sizes) != problem.d:
            raise ParameterError("block sizes must sum to d")
        slices = _split(sizes)

    def kkt(x, nu):
        r = A @ x - b
        stat = np.asarray(o.gradient(x), dtype=float) + A.T @ nu
        return float(np.linalg.norm(r)), float(np.linalg.norm(stat))

    rec = Recorder(stop)
    r_norm, stat = kkt(x, nu)
    history = [r_norm]
    if rec.record(0, o.value(x), max(r_norm, stat), 0.0, r_norm=r_norm, nu_norm=float(np.linalg.norm(nu))):
        return rec.report(x, nu=nu)
    k = 0
    while True:
        k += 1
        try:
            if blocks is None:
                L = _lagrangian_oracle(o, A, b, nu, rho)
                x_new = inner_minimize(L, x, inner)
                dual_value = L.value(x_new) if inner == "exact" and rho == 0 else None
            else:
                # separable: f = sum f_i(x_i); with rho = 0 the Lagrangian splits
                snap_x, snap_nu = x.copy(), nu.copy()

                def solve(i):
                    sl = slices[i]
                    Ai = A[:, sl]
                    Li = _lagrangian_oracle(oracles[i], Ai, np.zeros(b.size), snap_nu, 0.0)
                    return inner_minimize(Li, snap_x[sl], inner)

                parts = _map_blocks(solve, list(range(len(slices))), parallel)
                x_new = np.concatenate(parts)
                dual_value = (_lagrangian_oracle(o, A, b, nu, 0.0).value(x_new)
                              if inner == "exact" else None)
        except (DescentForgeError, ArithmeticError) as e:
            return rec.report(x, "aborted", nu=nu, error=str(e))
        x = x_new
        nu = nu + step * (A @ x - b)
        r_norm, stat = kkt(x, nu)
        history.append(r_norm)
        extras = {"r_norm": r_norm, "nu_norm": float(np.linalg.norm(nu))}
        if dual_value is not None:
            extras["dual_value"] = dual_value
        if len(history) > DIVERGENCE_WINDOW and history[-1] > 10 * history[-1 - DIVERGENCE_WINDOW] > 0:
            rec.record(k, o.value(x), max(r_norm, stat), step, **extras)
            return rec.report(x, "diverged", nu=nu)
        if rec.record(k, o.value(x), max(r_norm, stat), step, **extras):
            return rec.report(x, nu=nu)


def dual_ascent(problem: Problem, eta: float = 0.5, inner: Any = "exact", stop: StopRule = StopRule(),
                x0=None, nu0=None, blocks: Optional[Sequence[tuple[Oracle, int]]] = None,
                parallel: bool = False) -> Report:
    """Dual ascent: ``x = argmin_x L(x, nu)``, then ``nu += eta (Ax - b)``.

    With ``blocks`` (pairs ``(f_i, size_i)`` whose sum is the objective)
    the x-update is done per block independently (dual decomposition).
    ``gnorm`` is ``max(||Ax - b||, ||grad f + A^T nu||)``; ``extras`` carry
    ``r_norm``, ``nu_norm`` and, with exact inner solves, ``dual_value``.
    A primal residual growing tenfold over 100 iterations marks divergence.
    """
    if eta <= 0:
        raise ParameterError("eta must be positive")
    return _multiplier_loop(problem, eta, 0.0, inner, stop, x0, nu0, blocks, parallel)


def method_of_multipliers(problem: Problem, rho: float = 1.0, inner: Any = "exact", stop: StopRule = StopRule(),
                          x0=None, nu0=None) -> Report:
    """Augmented Lagrangian iteration; the dual step equals ``rho``."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    return _multiplier_loop(problem, rho, rho, inner, stop, x0, nu0, None, False)


def augmented_x_update(P, q, A, b, nu, rho: float):
    """Closed-form x-update for ``f = x^T P x / 2 + q^T x``:
    solves ``(P + rho A^T A) x = -q - A^T nu + rho A^T b``."""
    P = np.asarray(P, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return solve_linear(P + rho * A.T @ A, -np.asarray(q, dtype=float) - A.T @ nu + rho * A.T @ b)


# -- ADMM ---------------------------------------------------------------------

def admm_two_block(bp: BlockProblem, rho: float = 1.0, stop: StopRule = StopRule(), x0=None, z0=None,
                   u0=None, scaled: bool = True) -> Report:
    """ADMM for ``min f1(x) + f2(z)  s.t.  A x + B z = c``.

    Scaled form: ``x = argmin f1 + (rho/2)||Ax + Bz - c + u||^2``, then ``z``
    with the fresh ``x``, then ``u += Ax + Bz - c``. ``scaled=False`` runs
    the same iteration carrying ``nu = rho u`` instead. ``gnorm`` is
    ``max(||r||, ||s||)`` with dual residual ``s = rho ||A^T B (z - z_old)||``
    (``None`` at ``k = 0``). The report's ``x`` is ``concat(x, z)``.
    """
    if bp.coupling != "two_block":
        raise ParameterError("admm_two_block needs a two_block problem")
    if rho <= 0:
        raise ParameterError("rho must be positive")
    b1, b2 = bp.blocks
    A, B, c = b1.coupling, b2.coupling, bp.c
    x = np.zeros(b1.size) if x0 is None else as_vector(x0)
    z = np.zeros(b2.size) if z0 is None else as_vector(z0)
    u = np.zeros(c.size) if u0 is None else np.array(u0, dtype=float)
    nu = rho * u

    def objective(x, z):
        return b1.value(x) + b2.value(z)

    rec = Recorder(stop)
    r = A @ x + B @ z - c
    if rec.record(0, objective(x, z), None, 0.0, r_norm=float(np.linalg.norm(r)), s_norm=0.0,
                  nu_norm=float(np.linalg.norm(nu))):
        return rec.report(np.concatenate([x, z]), x_block=x, z=z, u=u, nu=nu)
    k = 0
    while True:
        k += 1
        try:
            dual = u if scaled else nu / rho
            x = block_argmin(b1, B @ z - c + dual, rho, x)
            dual = u if scaled else nu / rho
            z_old = z
            z = block_argmin(b2, A @ x - c + dual, rho, z)
        except (DescentForgeError, ArithmeticError) as e:
            return rec.report(np.concatenate([x, z]), "aborted", error=str(e), x_block=x, z=z, u=u, nu=nu)
        r = A @ x + B @ z - c
        if scaled:
            u = u + r
            nu = rho * u
        else:
            nu = nu + rho * r
            u = nu / rho
        r_norm = float(np.linalg.norm(r))
        s_norm = float(rho * np.linalg.norm(A.T @ (B @ (z - z_old))))
        if rec.record(k, objective(x, z), max(r_norm, s_norm), rho, r_norm=r_norm, s_norm=s_norm,
                      nu_norm=float(np.linalg.norm(nu))):
            return rec.report(np.concatenate([x, z]), x_block=x, z=z, u=u, nu=nu)


def squared_hinge(y: Oracle) -> Oracle:
    """``y'(x) = max(0, y(x))^2`` for an inequality ``y(x) <= 0``."""

    def value(x):
        return max(0.0, float(y.value(x))) ** 2

    def gradient(x):
        return 2 * max(0.0, float(y.value(x))) * np.asarray(y.gradient(x), dtype=float)

    hess = None
    if y.hessian is not None:
        def hess(x):
            v = float(y.value(x))
            if v <= 0:
                return np.zeros((x.size, x.size))
            g = np.asarray(y.gradient(x), dtype=float)
            return 2 * np.outer(g, g) + 2 * v * np.asarray(y.hessian(x), dtype=float)
    return Oracle(value, gradient, hess)


def _general_block_oracle(block: Block, u_lam, u_nu, rho) -> Oracle:
    f = block.f
    ys = [squared_hinge(y) for y in block.ineq]
    hs = list(block.eq)
    terms = [(c, u) for c, u in zip(ys, u_lam)] + [(c, u) for c, u in zip(hs, u_nu)]

    def value(x):
        return float(f.value(x)) + 0.5 * rho * sum((float(c.value(x)) + u) ** 2 for c, u in terms)

    def gradient(x):
        g = np.asarray(f.gradient(x), dtype=float).copy()
        for c, u in terms:
            g += rho * (float(c.value(x)) + u) * np.asarray(c.gradient(x), dtype=float)
        return g

    hess = None
    if f.hessian is not None and all(c.hessian is not None for c, _ in terms):
        def hess(x):
            H = np.asarray(f.hessian(x), dtype=float).copy()
            for c, u in terms:
                gc = np.asarray(c.gradient(x), dtype=float)
                H += rho * (np.outer(gc, gc) + (float(c.value(x)) + u) * np.asarray(c.hessian(x), dtype=float))
            return H
    return Oracle(value, gradient, hess)


def admm_general(bp: BlockProblem, rho: float = 1.0, stop: StopRule = StopRule(), x0s=None,
                 dual_step: str = "printed", parallel: bool = False) -> Report:
    """Block-separable ADMM with per-block inequality and equality constraints.

    Each inequality ``y_i(x_i) <= 0`` becomes ``y'_i = max(0, y_i)^2 = 0``.
    Block ``i`` minimises ``f_i + (rho/2)[(y'_i + u_lam)^2 + (h_i + u_nu)^2]``;
    then ``u_lam += rho y'_i`` and ``u_nu += rho h_i`` (``dual_step='printed'``)
    or without the factor ``rho`` (``'scaled'``). ``gnorm`` is the largest
    larger of the constraint violation ``max(max(0, y_i), |h_i|)`` and the
    iterate change ``||x^{k} - x^{k-1}||`` (``None`` at ``k = 0``).
    """
    if bp.coupling != "general":
        raise ParameterError("admm_general needs a general problem")
    if rho <= 0:
        raise ParameterError("rho must be positive")
    if dual_step not in ("printed", "scaled"):
        raise ParameterError("dual_step must be 'printed' or 'scaled'")
    blocks = bp.blocks
    xs = [np.zeros(b.size) if x0s is None else as_vector(x0s[i]) for i, b in enumerate(blocks)]
    u_lam = [np.zeros(len(b.ineq)) for b in blocks]
    u_nu = [np.zeros(len(b.eq)) for b in blocks]
    factor = rho if dual_step == "printed" else 1.0

    def violation(xs):
        v = 0.0
        for b, x in zip(blocks, xs):
            for y in b.ineq:
                v = max(v, float(y.value(x)))
            for h in b.eq:
                v = max(v, abs(float(h.value(x))))
        return v

    def objective(xs):
        return sum(b.value(x) for b, x in zip(blocks, xs))

    def pack(xs):
        return np.concatenate(xs)

    rec = Recorder(stop)
    if rec.record(0, objective(xs), None, 0.0, r_norm=violation(xs), nu_norm=0.0):
        return rec.report(pack(xs), blocks=xs)
    k = 0
    while True:
        k += 1
        snap = [x.copy() for x in xs]
        snap_l = [u.copy() for u in u_lam]
        snap_n = [u.copy() for u in u_nu]

        def solve(i):
            b = blocks[i]
            if callable(b.inner):
                return np.asarray(b.inner(snap_l[i], snap_n[i], rho, snap[i]), dtype=float)
            return inner_minimize(_general_block_oracle(b, snap_l[i], snap_n[i], rho), snap[i], b.inner, b.set)

        try:
            xs = _map_blocks(solve, list(range(len(blocks))), parallel)
        except (DescentForgeError, ArithmeticError) as e:
            return rec.report(pack(snap), "aborted", error=str(e), blocks=snap)
        for i, b in enumerate(blocks):
            u_lam[i] = u_lam[i] + factor * np.array([squared_hinge(y).value(xs[i]) for y in b.ineq])
            u_nu[i] = u_nu[i] + factor * np.array([float(h.value(xs[i])) for h in b.eq])
        viol = violation(xs)
        nu_norm = float(np.sqrt(sum(u @ u for u in u_lam + u_nu))) * rho
        change = float(np.linalg.norm(pack(xs) - pack(snap)))
        if rec.record(k, objective(xs), max(viol, change), rho, r_norm=viol, nu_norm=nu_norm):
            return rec.report(pack(xs), blocks=xs, u_lambda=u_lam, u_nu=u_nu)


def consensus_admm(terms: Sequence[Union[Oracle, ProxSpec, Block]], d: int, rho: float = 1.0,
                   stop: StopRule = StopRule(), z0=None, parallel: bool = False) -> Report:
    """Consensus ADMM for ``min sum_i f_i(x)`` via copies ``x_i = z``.

    ``x_i = argmin f_i + (rho/2)||x_i - z + u_i||^2`` (independent),
    ``z = mean(x_i + u_i)``, ``u_i += x_i - z``. ``gnorm`` is
    ``max(r, s)`` with ``r = sqrt(sum ||x_i - z||^2)`` and
    ``s = rho sqrt(m) ||z - z_old||``; ``info['max_dev']`` is
    ``max_i ||x_i - z||``.
    """
    if rho <= 0:
        raise ParameterError("rho must be positive")
    if not terms:
        raise ParameterError("need at least one term")
    blocks = [t if isinstance(t, Block) else Block(t, d) for t in terms]
    m = len(blocks)
    z = np.zeros(d) if z0 is None else as_vector(z0)
    xs = [z.copy() for _ in blocks]
    us = [np.zeros(d) for _ in blocks]

    def objective(z):
        return sum(b.value(z) for b in blocks)

    rec = Recorder(stop)
    if rec.record(0, objective(z), None, 0.0, r_norm=0.0, s_norm=0.0, nu_norm=0.0):
        return rec.report(z, xs=xs, us=us, max_dev=0.0)
    k = 0
    while True:
        k += 1
        snap_z, snap_u, snap_x = z.copy(), [u.copy() for u in us], [x.copy() for x in xs]
        try:
            # argmin f_i + (rho/2)||I x_i + (u_i - z)||^2
            xs = _map_blocks(lambda i: block_argmin(blocks[i], snap_u[i] - snap_z, rho, snap_x[i]),
                             list(range(m)), parallel)
        except (DescentForgeError, ArithmeticError) as e:
            return rec.report(z, "aborted", error=str(e))
        z_old = z
        z = sum(x + u for x, u in zip(xs, us)) / m
        us = [u + x - z for x, u in zip(xs, us)]
        devs = [float(np.linalg.norm(x - z)) for x in xs]
        r_norm = float(np.sqrt(sum(v * v for v in devs)))
        s_norm = float(rho * np.sqrt(m) * np.linalg.norm(z - z_old))
        nu_norm = float(rho * np.sqrt(sum(u @ u for u in us)))
        if rec.record(k, objective(z), max(r_norm, s_norm), rho, r_norm=r_norm, s_norm=s_norm, nu_norm=nu_norm):
            return rec.report(z, xs=xs, us=us, max_dev=max(devs))


def admm_lasso(X, y, lam: float, rho: float = 1.0, stop: StopRule = StopRule(grad_tol=1e-10, max_iters=20000),
               z0=None) -> Report:
    """Lasso as ``min 0.5||X x - y||^2 + lam ||z||_1  s.t.  x - z = 0``.

    The x-update reuses one Cholesky factor of ``X^T X + rho I``. The
    returned ``x`` is the sparse iterate ``z``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    Lc = cholesky(X.T @ X + rho * np.eye(d))
    Xty = X.T @ y

    def x_update(v, rho_, x_prev):
        return back_sub(Lc.T, forward_sub(Lc, Xty - rho_ * v))

    smooth = Oracle(value=lambda x: 0.5 * float(np.sum((X @ x - y) ** 2)), gradient=lambda x: X.T @ (X @ x - y))
    bp = BlockProblem((Block(smooth, d, inner=x_update), Block(ProxSpec.l1(lam), d, M=-np.eye(d))))
    rep = admm_two_block(bp, rho, stop, x0=z0, z0=z0)
    z = rep.info["z"]
    return Report(z, rep.status, rep.trace, rep.info)
