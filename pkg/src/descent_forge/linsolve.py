"""Dense linear algebra: LU, Cholesky, Schur block solves, CG, nonlinear CG,
and Jacobi-based SVD / symmetric eigendecomposition."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ConvergenceError,
    DefinitenessError,
    Oracle,
    ParameterError,
    Recorder,
    Report,
    SingularMatrixError,
    StopRule,
    as_vector,
    finite,
)

PIVOT_RTOL = 1e-12


def _square(M) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {M.shape}")
    return M


# -- direct solvers -----------------------------------------------------------

def lu_factor(M):
    """LU with partial pivoting: ``M[perm] = L @ U``.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-12 * ||M||_inf``.
    """
    A = _square(M)
    n = A.shape[0]
    tol = PIVOT_RTOL * max(np.max(np.sum(np.abs(A), axis=1)) if n else 0.0, np.finfo(float).tiny)
    perm = np.arange(n)
    L = np.eye(n)
    U = A.copy()
    for j in range(n):
        p = j + int(np.argmax(np.abs(U[j:, j])))
        if abs(U[p, j]) <= tol:
            raise SingularMatrixError(f"matrix is singular to tolerance at pivot {j}", pivot=j)
        if p != j:
            U[[j, p]] = U[[p, j]]
            perm[[j, p]] = perm[[p, j]]
            L[[j, p], :j] = L[[p, j], :j]
        m = U[j + 1:, j] / U[j, j]
        L[j + 1:, j] = m
        U[j + 1:, j:] -= np.outer(m, U[j, j:])
        U[j + 1:, j] = 0.0
    return perm, L, U


def forward_sub(L, b, unit: bool = False):
    n = L.shape[0]
    y = np.zeros(n)
    for i in range(n):
        s = b[i] - L[i, :i] @ y[:i]
        y[i] = s if unit else s / L[i, i]
    return y


def back_sub(U, y):
    n = U.shape[0]
    z = np.zeros(n)
    for i in range(n - 1, -1, -1):
        z[i] = (y[i] - U[i, i + 1:] @ z[i + 1:]) / U[i, i]
    return z


def cholesky(M):
    """Lower-triangular ``L`` with ``M = L L^T``; raises on non-SPD input."""
    A = _square(M)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise DefinitenessError("cholesky requires a symmetric matrix")
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0 or not math.isfinite(d):
            raise DefinitenessError(f"matrix is not positive definite (pivot {j})")
        L[j, j] = math.sqrt(d)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_linear(M, q, method: str = "auto"):
    """Solve ``M z = q`` by ``lu``, ``cholesky`` or ``auto``.

    ``auto`` tries Cholesky on symmetric input and falls back to LU.
    ``q`` may be a vector or a matrix of right-hand sides.
    """
    A = _square(M)
    q = np.asarray(q, dtype=float)
    if q.shape[0] != A.shape[0]:
        raise ParameterError("right-hand side has wrong length")
    if method == "auto":
        if np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)) if A.size else 1.0)):
            try:
                return solve_linear(A, q, "cholesky")
            except DefinitenessError:
                pass
        return solve_linear(A, q, "lu")
    if method == "cholesky":
        L = cholesky(A)
        solve = lambda b: back_sub(L.T, forward_sub(L, b))
    elif method == "lu":
        perm, L, U = lu_factor(A)
        solve = lambda b: back_sub(U, forward_sub(L, b[perm], unit=True))
    else:
        raise ParameterError(f"unknown method {method!r}")
    if q.ndim == 1:
        return solve(q)
    return np.column_stack([solve(q[:, j]) for j in range(q.shape[1])])


@dataclass(frozen=True)
class BlockSystem:
    M11: np.ndarray
    M12: np.ndarray
    M21: np.ndarray
    M22: np.ndarray
    q1: np.ndarray
    q2: np.ndarray

    def full(self):
        M = np.block([[self.M11, self.M12], [self.M21, self.M22]])
        return M, np.concatenate([self.q1, self.q2])


def solve_schur(sys: BlockSystem):
    """Block solve via the Schur complement of ``M11``.

    1. ``a = M11^{-1} q1`` and ``W = M11^{-1} M12``
    2. ``S = M22 - M21 W``
    3. ``z2 = S^{-1}(q2 - M21 a)``
    4. ``z1 = a - W z2``
    """
    M11 = _square(sys.M11)
    M22 = _square(sys.M22)
    M12 = np.asarray(sys.M12, dtype=float).reshape(M11.shape[0], M22.shape[0])
    M21 = np.asarray(sys.M21, dtype=float).reshape(M22.shape[0], M11.shape[0])
    q1 = np.asarray(sys.q1, dtype=float)
    q2 = np.asarray(sys.q2, dtype=float)
    try:
        rhs = solve_linear(M11, np.column_stack([q1, M12]))
    except (SingularMatrixError, DefinitenessError) as e:
        raise SingularMatrixError(f"block M11 is singular: {e}", block="M11") from e
    a, W = rhs[:, 0], rhs[:, 1:]
    S = M22 - M21 @ W
    try:
        z2 = solve_linear(S, q2 - M21 @ a, "lu")
    except SingularMatrixError as e:
        raise SingularMatrixError(f"Schur complement is singular: {e}", block="schur") from e
    return a - W @ z2, z2


# -- conjugate gradient -------------------------------------------------------

@dataclass
class CGResult:
    z: np.ndarray
    iterations: int
    converged: bool
    residual_norms: list = field(default_factory=list)
    directions: list = field(default_factory=list)


def conjugate_gradient(M, q, x0=None, tol: float = 1e-10, max_iters: Optional[int] = None,
                       keep_directions: bool = False) -> CGResult:
    """Linear CG for SPD ``M``. On hitting ``max_iters`` the last iterate is
    returned with ``converged=False`` and a warning."""
    A = _square(M)
    if not np.allclose(A, A.T, rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(A)))):
        raise ParameterError("conjugate_gradient requires a symmetric matrix")
    q = np.asarray(q, dtype=float)
    n = q.size
    z = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    max_iters = 10 * n if max_iters is None else max_iters
    r = q - A @ z
    p = r.copy()
    rr = r @ r
    res = [math.sqrt(rr)]
    dirs = []
    k = 0
    while res[-1] > tol and k < max_iters:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise DefinitenessError("matrix is not positive definite along a CG direction")
        eta = rr / pAp
        if keep_directions:
            dirs.append(p.copy())
        z = z + eta * p
        r = r - eta * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        res.append(math.sqrt(rr))
        k += 1
    ok = res[-1] <= tol
    if not ok:
        warnings.warn(f"conjugate_gradient stopped at max_iters={max_iters}, residual {res[-1]:.3e}")
    return CGResult(z, k, ok, res, dirs)


def _ncg_beta(rule: str, r_new, r_old, p_old, clamp_pr: bool) -> float:
    # rules as printed, with r = -grad
    if rule == "fr":
        den = r_old @ r_old
        return 0.0 if den == 0 else (r_new @ r_new) / den
    if rule == "pr":
        den = r_old @ r_old
        b = 0.0 if den == 0 else r_new @ (r_new - r_old) / den
        return max(b, 0.0) if clamp_pr else b
    if rule == "hs":
        den = p_old @ (r_new - r_old)
        return 0.0 if den == 0 else -(r_new @ (r_new - r_old)) / den
    if rule == "dy":
        den = p_old @ (r_new - r_old)
        return 0.0 if den == 0 else -(r_new @ r_new) / den
    raise ParameterError(f"unknown beta rule {rule!r}")


def nonlinear_cg(oracle: Oracle, x0, beta: str = "pr", stop: StopRule = StopRule(),
                 clamp_pr: bool = True, line_search: str = "wolfe", c2: float = 0.1) -> Report:
    """Nonlinear conjugate gradient.

    ``p = r + beta p_prev`` with ``r = -grad f``. Steps come from a strong
    Wolfe search (``c2=0.1`` by default, small enough for FR/DY descent) or
    an exact 1-D bisection when ``line_search='exact'``. A direction that is
    not a descent direction is reset to ``r``.
    """
    from .linesearch import exact_step, wolfe_search

    oracle.require("gradient")
    if beta not in ("fr", "pr", "hs", "dy"):
        raise ParameterError(f"unknown beta rule {beta!r}")
    z = as_vector(x0)
    rec = Recorder(stop)
    f = oracle.value(z)
    r = -np.asarray(oracle.gradient(z), dtype=float)
    p = r.copy()
    if rec.record(0, f, np.linalg.norm(r), 0.0, beta=0.0):
        return rec.report(z)
    k = 0
    restarts = 0
    while True:
        if r @ p <= 0:
            p = r.copy()
            restarts += 1
        if line_search == "exact":
            eta, ok = exact_step(oracle, z, p), True
        else:
            ls = wolfe_search(oracle, z, p, c1=1e-4, c2=c2, strong=True)
            eta, ok = ls.eta, ls.satisfied
        z_new = z + eta * p
        f_new = oracle.value(z_new)
        g_new = np.asarray(oracle.gradient(z_new), dtype=float)
        k += 1
        if not finite(f_new, g_new):
            return rec.report(z, "diverged")
        r_new = -g_new
        b = _ncg_beta(beta, r_new, r, p, clamp_pr)
        p = r_new + b * p
        z, r = z_new, r_new
        if rec.record(k, f_new, np.linalg.norm(r), eta, beta=b, ls_ok=float(ok)):
            return rec.report(z, restarts=restarts)


# -- Jacobi SVD and symmetric eigendecomposition -----------------------------

@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def _complete_columns(U, filled):
    """Replace columns not in ``filled`` by an orthonormal completion."""
    m, n = U.shape
    Q = U[:, filled]
    out = U.copy()
    basis = list(Q.T)
    cand = iter(np.eye(m))
    for j in range(n):
        if filled[j]:
            continue
        while True:
            v = next(cand).copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                break
        basis.append(v)
        out[:, j] = v
    return out


def svd(X, tol: float = 1e-15, max_sweeps: int = 100) -> SvdResult:
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``U`` (m x k), ``S`` descending and ``V`` (n x k) with
    ``k = min(m, n)``.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError("svd requires a matrix")
    if not np.all(np.isfinite(X)):
        raise ParameterError("svd of non-finite matrix")
    m, n = X.shape
    if m < n:
        r = svd(X.T, tol, max_sweeps)
        return SvdResult(r.V, r.S, r.U)
    U = X.copy()
    V = np.eye(n)
    # orthogonality below a few ulps of the column length is not attainable
    rtol = max(tol, m * np.finfo(float).eps)
    negligible = (np.finfo(float).eps * np.linalg.norm(X)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = U[:, i] @ U[:, i]
                b = U[:, j] @ U[:, j]
                c = U[:, i] @ U[:, j]
                if abs(c) <= rtol * math.sqrt(a * b) or c == 0.0 or min(a, b) <= negligible:
                    continue
                rotated = True
                zeta = (b - a) / (2 * c)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1 + zeta * zeta))
                cs = 1 / math.sqrt(1 + t * t)
                sn = cs * t
                ui, uj = U[:, i].copy(), U[:, j].copy()
                U[:, i], U[:, j] = cs * ui - sn * uj, sn * ui + cs * uj
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i], V[:, j] = cs * vi - sn * vj, sn * vi + cs * vj
        if not rotated:
            break
    else:
        raise ConvergenceError("svd: Jacobi sweeps did not converge")
    S = np.linalg.norm(U, axis=0)
    order = np.argsort(-S, kind="stable")
    S, U, V = S[order], U[:, order], V[:, order]
    scale = S[0] if n and S[0] > 0 else 1.0
    filled = S > 1e-14 * scale
    U[:, filled] = U[:, filled] / S[filled]
    if not np.all(filled):
        S = np.where(filled, S, 0.0)
        U = _complete_columns(U, filled)
    return SvdResult(U, S, V)


def sym_eig(H, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition ``H = Q diag(w) Q^T`` (ascending ``w``)."""
    A = _square(H)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)) if A.size else 1.0)):
        raise ParameterError("sym_eig requires a symmetric matrix")
    A = (A + A.T) / 2
    n = A.shape[0]
    Q = np.eye(n)
    for sweep in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * max(np.linalg.norm(A), np.finfo(float).tiny):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = abs(A[p, q])
                # entries negligible next to both diagonal entries are dropped
                if sweep > 3 and abs(A[p, p]) + 100 * apq == abs(A[p, p]) \
                        and abs(A[q, q]) + 100 * apq == abs(A[q, q]):
                    A[p, q] = A[q, p] = 0.0
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1 + theta * theta))
                c = 1 / math.sqrt(1 + t * t)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * ap - s * aq, s * ap + c * aq
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p], Q[:, q] = c * qp - s * qq, s * qp + c * qq
    else:
        raise ConvergenceError("sym_eig: Jacobi sweeps did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def largest_eigenvalue(M, iters: int = 500, tol: float = 1e-10, seed: int = 0) -> float:
    """Power iteration estimate of the largest eigenvalue of a PSD matrix."""
    A = _square(M)
    v = np.random.Generator(np.random.Philox(seed)).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        lam_new = v @ w
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return float(lam_new)
        lam = lam_new
    return float(lam)
