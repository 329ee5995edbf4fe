"""Problem factories used by the check-grad tests."""

import numpy as np

from descent_forge.core import Oracle, Problem


def corrupted_quadratic(seed=0, scale=1.01):
    # gradient off by 1%: well above the 1e-5 check tolerance
    return Problem(Oracle(lambda x: 0.5 * float(x @ x), lambda x: scale * x), 3, name="corrupted_quadratic")
