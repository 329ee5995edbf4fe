import sys

import numpy as np
import pytest

from descent_forge.core import Oracle, Problem
from descent_forge.stochastic import make_rng


def quadratic(A, b=None, c=0.0):
    """Oracle for 0.5 x^T A x - b^T x + c."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    return Oracle(value=lambda x: 0.5 * float(x @ A @ x) - float(b @ x) + c,
                  gradient=lambda x: A @ x - b, hessian=lambda x: A.copy())


def random_spd(rng, d, cond=None):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.geomspace(1.0, cond, d) if cond else rng.uniform(0.5, 5.0, d)
    return (Q * w) @ Q.T


def quad_problem(A, b):
    A = np.asarray(A, dtype=float)
    w = np.linalg.eigvalsh(A)
    xs = np.linalg.solve(A, b)
    o = quadratic(A, b)
    return Problem(o, A.shape[0], L=float(w[-1]), mu=float(w[0]), x_star=xs, f_star=o.value(xs))


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def half_square():
    """f = 0.5 ||x||^2."""
    return Oracle(value=lambda x: 0.5 * float(np.dot(x, x)), gradient=lambda x: np.array(x, dtype=float),
                  hessian=lambda x: np.eye(np.size(x)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
