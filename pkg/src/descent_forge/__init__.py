"""descent-forge: first- and second-order optimisation algorithms with a
shared oracle/trace model."""

from .core import (
    CapabilityError,
    DescentForgeError,
    Oracle,
    ParameterError,
    Problem,
    Recorder,
    Report,
    StopRule,
    TraceRecord,
    check_gradient,
)
from .problems import make_problem

__version__ = "0.1.0"

__all__ = [
    "CapabilityError",
    "DescentForgeError",
    "Oracle",
    "ParameterError",
    "Problem",
    "Recorder",
    "Report",
    "StopRule",
    "TraceRecord",
    "check_gradient",
    "make_problem",
]
