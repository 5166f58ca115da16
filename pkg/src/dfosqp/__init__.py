"""Derivative-free trust-region SQP optimizer.

Minimizes a black-box objective under bound, linear, and nonlinear
constraints using quadratic interpolation models that are cheap to maintain
between iterations. No derivatives of the objective or constraints are ever
requested; every point handed to user callbacks satisfies the bounds exactly.

The usual entry points are :func:`build_problem` and :func:`minimize`::

    from dfosqp import build_problem, minimize

    problem = build_problem(lambda x: (x[0] - 1) ** 2 + x[1] ** 2, n=2)
    result = minimize(problem, [3.0, 4.0])
"""

from .driver import Options, SolveResult, minimize
from .problem import (
    ConfigurationError,
    InfeasibleBoundsError,
    Problem,
    build_problem,
)

__all__ = [
    "ConfigurationError",
    "InfeasibleBoundsError",
    "Options",
    "Problem",
    "SolveResult",
    "build_problem",
    "minimize",
]

__version__ = "0.1.0"
