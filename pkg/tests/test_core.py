import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from descent_forge.core import (
    CapabilityError,
    EvaluationError,
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    StopRule,
    TraceRecord,
    check_gradient,
    check_stop,
    norm,
)

vec = arrays(np.float64, st.integers(1, 6), elements=st.floats(-1e3, 1e3))


def test_norm_examples():
    assert norm(np.array([3.0, 4.0]), "l2") == 5.0
    assert norm(np.zeros(3), "l1") == 0.0
    assert norm(np.eye(2), "spectral") == pytest.approx(1.0, abs=1e-14)
    assert norm(np.array([1.0, -7.0, 2.0]), "linf") == 7.0
    assert norm(np.array([[1.0, 2.0], [2.0, 4.0]]), "frobenius") == 5.0


def test_spectral_norm_needs_matrix():
    with pytest.raises(ParameterError):
        norm(np.array([1.0, 2.0]), "spectral")


def test_spectral_norm_frozen():
    # singular values of [[2, 0], [0, -3]] are 3 and 2
    assert norm(np.array([[2.0, 0.0], [0.0, -3.0]]), "spectral") == pytest.approx(3.0, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_triangle_inequality(data):
    n = data.draw(st.integers(1, 6))
    x = data.draw(arrays(np.float64, n, elements=st.floats(-1e3, 1e3)))
    y = data.draw(arrays(np.float64, n, elements=st.floats(-1e3, 1e3)))
    for kind in ("l1", "l2", "linf"):
        assert norm(x + y, kind) <= norm(x, kind) + norm(y, kind) + 1e-12 * (1 + norm(x, kind) + norm(y, kind))


def test_check_gradient_examples(half_square):
    assert check_gradient(half_square, np.array([1.0, 2.0]), 1e-5) <= 1e-7
    c = np.array([2.0, -1.0, 0.5])
    lin = Oracle(value=lambda x: float(c @ x), gradient=lambda x: c.copy())
    assert check_gradient(lin, np.array([0.3, -4.0, 9.0])) <= 1e-10
    wrong = Oracle(value=lambda x: 0.5 * float(x @ x), gradient=lambda x: 2 * x)
    # g = 2, fd = 1: |1 - 2| / (1 + 2)
    assert check_gradient(wrong, np.array([1.0])) == pytest.approx(1.0 / 3.0, rel=1e-8)


def test_check_gradient_errors(half_square):
    with pytest.raises(ParameterError):
        check_gradient(half_square, np.ones(2), h=0.1)
    with pytest.raises(CapabilityError):
        check_gradient(Oracle(value=lambda x: 0.0), np.ones(2))
    bad = Oracle(value=lambda x: math.log(x[1]) if x[1] > 0 else math.nan,
                 gradient=lambda x: np.array([0.0, 1 / x[1]]))
    with pytest.raises(EvaluationError) as ei:
        check_gradient(bad, np.array([1.0, 1e-6]))
    assert ei.value.index == 1


def _rec(k, f, g):
    return TraceRecord(k, f, g, 1.0)


def test_check_stop_examples():
    assert check_stop(StopRule(grad_tol=1e-6), _rec(0, 1, 1), _rec(1, 1, 1e-7))
    assert check_stop(StopRule(grad_tol=0, max_iters=10), _rec(8, 1, 1), _rec(9, 1, 1))
    assert not check_stop(StopRule(grad_tol=0, max_iters=10), _rec(7, 1, 1), _rec(8, 1, 1))
    assert not check_stop(StopRule(grad_tol=0, max_iters=10**12), _rec(0, 1, 1), _rec(1, 0.5, 0.5))
    assert check_stop(StopRule(grad_tol=0, f_change_tol=1e-3, max_iters=100), _rec(0, 1.0, 1), _rec(1, 1.0005, 1))
    assert check_stop(StopRule(grad_tol=0, grad_change_tol=1e-3, max_iters=100), _rec(0, 1, 2.0), _rec(1, 0, 2.0005))


def test_missing_gnorm_never_triggers_grad_tol():
    assert not check_stop(StopRule(grad_tol=1e-6), _rec(0, 1, None), _rec(1, 1, None))


def test_stop_rule_needs_a_criterion():
    with pytest.raises(ParameterError):
        StopRule(grad_tol=0.0, max_iters=math.inf)
    with pytest.raises(ParameterError):
        StopRule(grad_tol=-1.0)


def test_recorder_flags_divergence():
    rec = Recorder(StopRule(grad_tol=0.0, max_iters=100))
    assert not rec.record(0, 1.0, 1.0, 0.0)
    assert rec.record(1, math.inf, 1.0, 0.1)
    assert rec.status == "diverged"


def test_trace_json_schema():
    r = TraceRecord(3, 0.5, None, 0.25, {"r_norm": 1.5}, 12.0)
    assert r.to_json() == {"k": 3, "f": 0.5, "gnorm": None, "step": 0.25, "t_ms": 12.0, "extras": {"r_norm": 1.5}}
    assert r.to_json(timing=False)["t_ms"] == 0.0
    json.dumps(r.to_json())


def test_problem_validation():
    o = Oracle(value=lambda x: 0.0)
    with pytest.raises(ParameterError):
        Problem(o, 0)
    with pytest.raises(ParameterError):
        Problem(o, 2, L=1.0, mu=2.0)
    with pytest.raises(ParameterError):
        Problem(o, 2, eq_affine=(np.ones((1, 3)), np.ones(1)))
    p = Problem(o, 2, ineq=[o, o], eq_affine=([[1.0, 1.0]], [1.0]))
    assert (p.m1, p.m2) == (2, 1)
