"""Problem definition, input preprocessing, and mediated function evaluations.

All objective/constraint evaluations of a solve go through :meth:`Problem.evaluate`,
which enforces exact bound feasibility, applies the non-finite barrier convention,
and appends to the evaluation history used for best-iterate selection.
"""

from __future__ import annotations

import dataclasses

import numpy as np

__all__ = [
    "ConfigurationError",
    "InfeasibleBoundsError",
    "EvalRecord",
    "PreprocessReport",
    "Problem",
    "build_problem",
    "preprocess",
]


class ConfigurationError(ValueError):
    """Inconsistent dimensions or malformed problem description."""


class InfeasibleBoundsError(ValueError):
    """Some lower bound strictly exceeds its upper bound."""


@dataclasses.dataclass(frozen=True)
class EvalRecord:
    """One counted evaluation: point, objective, and constraint values.

    ``cub`` stacks linear inequality residuals (A_I x - b_I) before nonlinear
    inequality values; ``ceq`` likewise for equalities. ``index`` is the 1-based
    evaluation counter.
    """

    x: np.ndarray
    f: float
    cub: np.ndarray
    ceq: np.ndarray
    index: int


@dataclasses.dataclass
class PreprocessReport:
    fixed_indices: np.ndarray
    fixed_values: np.ndarray
    reduced_n: int
    adjusted_x0: np.ndarray
    adjusted_delta0: float

    def inflate(self, x_red: np.ndarray) -> np.ndarray:
        """Map a reduced-space point back to the full decision space."""
        n_full = self.reduced_n + self.fixed_indices.size
        x_full = np.empty(n_full)
        x_full[self.fixed_indices] = self.fixed_values
        free = np.setdiff1d(np.arange(n_full), self.fixed_indices)
        x_full[free] = x_red
        return x_full


def _as_matrix(a, name: str, n: int | None) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(a, dtype=float))
    if mat.size == 0:
        return mat.reshape(0, n if n is not None else 0)
    if n is not None and mat.shape[1] != n:
        raise ConfigurationError(f"{name} has {mat.shape[1]} columns, expected {n}")
    return mat


def _sanitize_con(vals) -> np.ndarray:
    vals = np.atleast_1d(np.asarray(vals, dtype=float))
    # Non-finite constraint values count as infinite violation.
    vals[~np.isfinite(vals)] = np.inf
    return vals


class Problem:
    """Validated optimization problem with counted, bound-respecting evaluations."""

    def __init__(self, objective, lower, upper, a_ub, b_ub, a_eq, b_eq, c_ub, c_eq):
        self.objective = objective
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.a_ub = a_ub
        self.b_ub = b_ub
        self.a_eq = a_eq
        self.b_eq = b_eq
        self.c_ub = c_ub
        self.c_eq = c_eq
        # Nonlinear family sizes are unknown until the first evaluation; probing
        # the callbacks here would spend evaluations behind the user's back.
        self.n_nl_ub: int | None = 0 if c_ub is None else None
        self.n_nl_eq: int | None = 0 if c_eq is None else None
        self.nfev = 0
        self.history: list[EvalRecord] = []

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def n_lin_ub(self) -> int:
        return self.a_ub.shape[0]

    @property
    def n_lin_eq(self) -> int:
        return self.a_eq.shape[0]

    @property
    def is_constrained(self) -> bool:
        """True when inequality/equality rows exist (bounds do not count)."""
        return (
            self.n_lin_ub > 0
            or self.n_lin_eq > 0
            or self.n_nl_ub != 0
            or self.n_nl_eq != 0
        )

    def _nonlinear(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cub = _sanitize_con(self.c_ub(x)) if self.c_ub is not None else np.empty(0)
        ceq = _sanitize_con(self.c_eq(x)) if self.c_eq is not None else np.empty(0)
        if self.n_nl_ub is None:
            self.n_nl_ub = cub.size
        if self.n_nl_eq is None:
            self.n_nl_eq = ceq.size
        return cub, ceq

    def evaluate(self, x: np.ndarray) -> EvalRecord:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise RuntimeError("internal invariant violated: evaluation outside bounds")
        fval = self.objective(x)
        try:
            fval = float(fval)
        except (TypeError, ValueError):
            fval = np.inf
        if not np.isfinite(fval):
            fval = np.inf
        cub_nl, ceq_nl = self._nonlinear(x)
        cub = np.concatenate([self.a_ub @ x - self.b_ub, cub_nl])
        ceq = np.concatenate([self.a_eq @ x - self.b_eq, ceq_nl])
        self.nfev += 1
        record = EvalRecord(x.copy(), fval, cub, ceq, self.nfev)
        self.history.append(record)
        return record

    def maxcv(self, x: np.ndarray, cub: np.ndarray | None = None,
              ceq: np.ndarray | None = None) -> float:
        """l-infinity constraint violation; callbacks used uncounted if needed."""
        x = np.asarray(x, dtype=float)
        if cub is None or ceq is None:
            cub_nl, ceq_nl = self._nonlinear(x)
            cub = np.concatenate([self.a_ub @ x - self.b_ub, cub_nl])
            ceq = np.concatenate([self.a_eq @ x - self.b_eq, ceq_nl])
        pieces = [
            np.max(cub, initial=0.0),
            np.max(np.abs(ceq), initial=0.0),
            np.max(self.lower - x, initial=0.0),
            np.max(x - self.upper, initial=0.0),
        ]
        return float(max(0.0, *pieces))


def build_problem(objective, n: int | None = None, xl=None, xu=None, aub=None,
                  bub=None, aeq=None, beq=None, cub=None, ceq=None) -> Problem:
    """Validate a user-facing problem description into a :class:`Problem`.

    The dimension is inferred from the bounds or linear matrices unless given.
    Absent constraint families become empty arrays or ``None`` callbacks.
    """
    if not callable(objective):
        raise ConfigurationError("objective must be callable")
    for name, c in (("cub", cub), ("ceq", ceq)):
        if c is not None and not callable(c):
            raise ConfigurationError(f"{name} must be callable")
    if n is None:
        for cand in (xl, xu):
            if cand is not None:
                n = np.asarray(cand).size
                break
        else:
            for cand in (aub, aeq):
                if cand is not None:
                    n = np.atleast_2d(np.asarray(cand)).shape[1]
                    break
    if n is None:
        raise ConfigurationError("cannot infer problem dimension")
    lower = np.full(n, -np.inf) if xl is None else np.asarray(xl, dtype=float)
    upper = np.full(n, np.inf) if xu is None else np.asarray(xu, dtype=float)
    if lower.shape != (n,) or upper.shape != (n,):
        raise ConfigurationError("bound shapes inconsistent with dimension")
    if np.any(lower > upper):
        raise InfeasibleBoundsError("some lower bound exceeds its upper bound")
    a_ub = _as_matrix(aub if aub is not None else np.empty((0, n)), "aub", n)
    a_eq = _as_matrix(aeq if aeq is not None else np.empty((0, n)), "aeq", n)
    b_ub = np.atleast_1d(np.asarray(bub, dtype=float)) if bub is not None else np.empty(0)
    b_eq = np.atleast_1d(np.asarray(beq, dtype=float)) if beq is not None else np.empty(0)
    if b_ub.size != a_ub.shape[0]:
        raise ConfigurationError("aub/bub dimensions disagree")
    if b_eq.size != a_eq.shape[0]:
        raise ConfigurationError("aeq/beq dimensions disagree")
    return Problem(objective, lower, upper, a_ub, b_ub, a_eq, b_eq, cub, ceq)


def _place_component(x: float, lo: float, hi: float, delta: float) -> float:
    """Move x so it sits on a bound or at least delta away from both."""
    x = min(max(x, lo), hi)
    if np.isfinite(lo) and 0.0 < x - lo < delta:
        return lo if x - lo <= 0.5 * delta else min(lo + delta, hi)
    if np.isfinite(hi) and 0.0 < hi - x < delta:
        return hi if hi - x <= 0.5 * delta else max(hi - delta, lo)
    return x


def preprocess(p: Problem, x0, delta0: float) -> tuple[Problem, PreprocessReport]:
    """Fix equal-bound variables, clamp delta0, and place x0 relative to bounds.

    Returns a reduced problem over the free variables; its callbacks re-inflate
    points before calling the user's functions.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.n,):
        raise ConfigurationError("x0 shape inconsistent with problem dimension")
    if np.any(p.lower > p.upper):
        raise InfeasibleBoundsError("some lower bound exceeds its upper bound")
    fixed = np.flatnonzero(p.lower == p.upper)
    free = np.setdiff1d(np.arange(p.n), fixed)
    fixed_values = p.lower[fixed].copy()

    lo, hi = p.lower[free], p.upper[free]
    if free.size:
        delta = min(float(delta0), 0.5 * float(np.min(hi - lo)))
    else:
        delta = float(delta0)
    adj = np.array([_place_component(x0[i], p.lower[i], p.upper[i], delta)
                    for i in free])

    if fixed.size == 0:
        reduced = p
    else:
        def inflate(x_red):
            x_full = np.empty(p.n)
            x_full[fixed] = fixed_values
            x_full[free] = x_red
            return x_full

        objective = p.objective
        c_ub = p.c_ub
        c_eq = p.c_eq
        reduced = Problem(
            lambda z: objective(inflate(z)),
            lo,
            hi,
            p.a_ub[:, free],
            p.b_ub - p.a_ub[:, fixed] @ fixed_values,
            p.a_eq[:, free],
            p.b_eq - p.a_eq[:, fixed] @ fixed_values,
            None if c_ub is None else (lambda z: c_ub(inflate(z))),
            None if c_eq is None else (lambda z: c_eq(inflate(z))),
        )
    report = PreprocessReport(fixed, fixed_values, free.size, adj, delta)
    return reduced, report
