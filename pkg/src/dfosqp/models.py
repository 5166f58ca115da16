"""Quadratic interpolation models and their incremental maintenance.

The interpolation system couples m point conditions with minimum-Frobenius-norm
Hessian selection. Its coefficient matrix W is never solved directly in the hot
path; instead the inverse is kept in block form (Omega = Z D Z^T, Xi, Upsilon)
and revised by a rank-2 formula each time one interpolation point is replaced.
Model Hessians are stored as an explicit symmetric part plus rank-one implicit
terms paired with the current points, so updates cost O(n^2).
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
import scipy.linalg

__all__ = [
    "GeometryDegenerateError",
    "DenominatorZeroError",
    "InterpolationState",
    "InverseKKT",
    "QuadraticModel",
    "ModelBundle",
    "initial_interpolation_set",
    "build_kkt",
    "factorize",
    "solve_broyden",
    "lagrange_polynomial",
    "denominator",
    "replace_point",
    "shift_base",
    "zm_points",
    "lagrange_zm_value",
    "lambda_poisedness_zm",
]

# Relative pivot threshold below which the interpolation system counts as
# numerically singular.
PIVOT_TOL = 1e-12


class GeometryDegenerateError(RuntimeError):
    """The interpolation system is numerically singular."""


class DenominatorZeroError(RuntimeError):
    """The update denominator vanished; continuing would corrupt the inverse."""


@dataclasses.dataclass
class InverseKKT:
    zmat: np.ndarray      # m x (m - n - 1)
    dmat: np.ndarray      # signs, +/-1, length m - n - 1
    xi: np.ndarray        # (n + 1) x m, rows: constant then gradient
    upsilon: np.ndarray   # (n + 1) x (n + 1)

    def omega(self) -> np.ndarray:
        return (self.zmat * self.dmat) @ self.zmat.T

    def omega_col(self, t: int) -> np.ndarray:
        return self.zmat @ (self.dmat * self.zmat[t])

    def assemble(self) -> np.ndarray:
        m = self.zmat.shape[0]
        n1 = self.xi.shape[0]
        full = np.empty((m + n1, m + n1))
        full[:m, :m] = self.omega()
        full[m:, :m] = self.xi
        full[:m, m:] = self.xi.T
        full[m:, m:] = self.upsilon
        return full


@dataclasses.dataclass
class InterpolationState:
    base: np.ndarray           # current model base point
    rel: np.ndarray            # m x n, points relative to the base
    fvals: np.ndarray          # m objective values
    cvals: np.ndarray          # m x (r + s) nonlinear constraint values
    inv: InverseKKT | None = None
    current_index: int = 0

    @property
    def n(self) -> int:
        return self.base.size

    @property
    def m(self) -> int:
        return self.rel.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.base + self.rel

    def point(self, i: int) -> np.ndarray:
        return self.base + self.rel[i]


@dataclasses.dataclass
class QuadraticModel:
    """alpha + g^T (x - base) + 0.5 (x - base)^T H (x - base) with
    H = hess_explicit + sum_i implicit_i rel_i rel_i^T."""

    intercept: float
    grad: np.ndarray
    hess_explicit: np.ndarray
    implicit: np.ndarray

    @classmethod
    def zero(cls, n: int, m: int) -> "QuadraticModel":
        return cls(0.0, np.zeros(n), np.zeros((n, n)), np.zeros(m))

    def value(self, state: InterpolationState, x: np.ndarray) -> float:
        d = x - state.base
        pd = state.rel @ d
        return float(self.intercept + self.grad @ d
                     + 0.5 * (d @ (self.hess_explicit @ d) + self.implicit @ pd ** 2))

    def gradient(self, state: InterpolationState, x: np.ndarray) -> np.ndarray:
        d = x - state.base
        return self.grad + self.hess_explicit @ d \
            + state.rel.T @ (self.implicit * (state.rel @ d))

    def hess_vec(self, state: InterpolationState, v: np.ndarray) -> np.ndarray:
        return self.hess_explicit @ v + state.rel.T @ (self.implicit * (state.rel @ v))

    def dense_hess(self, state: InterpolationState) -> np.ndarray:
        return self.hess_explicit + state.rel.T @ (self.implicit[:, None] * state.rel)

    def values_at_points(self, state: InterpolationState) -> np.ndarray:
        p = state.rel
        cross = (p @ p.T) ** 2
        return (self.intercept + p @ self.grad
                + 0.5 * np.einsum("ij,ij->i", p, p @ self.hess_explicit)
                + 0.5 * cross @ self.implicit)


@dataclasses.dataclass
class ModelBundle:
    """Objective model plus one model per nonlinear constraint row."""

    f_model: QuadraticModel
    c_models: list[QuadraticModel]

    def all_models(self) -> list[QuadraticModel]:
        return [self.f_model, *self.c_models]


def initial_interpolation_set(x0: np.ndarray, delta0: float, m: int,
                              l: np.ndarray, u: np.ndarray) -> InterpolationState:
    """First interpolation set: coordinate steps from x0, flipped or doubled at
    active bounds, then pairwise combinations when m > 2n + 1."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if not n + 2 <= m <= (n + 1) * (n + 2) // 2:
        raise ValueError(f"m = {m} outside [n + 2, (n + 1)(n + 2)/2] for n = {n}")
    pts = np.tile(x0, (m, 1))
    for k in range(n):
        step = -delta0 if x0[k] == u[k] else delta0
        pts[1 + k, k] += step
    for k in range(min(n, m - n - 1)):
        if x0[k] == l[k]:
            step = 2.0 * delta0
        elif x0[k] == u[k]:
            step = -2.0 * delta0
        else:
            step = -delta0
        pts[n + 1 + k, k] += step
    for i in range(2 * n + 2, m + 1):
        kappa = (i - n - 2) // n
        p = i - n - 1 - n * kappa
        q = p + kappa if p + kappa <= n else p + kappa - n
        pts[i - 1] = pts[p] + pts[q] - x0
    if len({tuple(row) for row in pts}) != m:
        raise ValueError("initial interpolation points are not pairwise distinct")
    return InterpolationState(
        base=x0.copy(),
        rel=pts - x0,
        fvals=np.full(m, np.nan),
        cvals=np.empty((m, 0)),
    )


def build_kkt(state: InterpolationState) -> np.ndarray:
    m, n = state.m, state.n
    w = np.zeros((m + n + 1, m + n + 1))
    w[:m, :m] = 0.5 * (state.rel @ state.rel.T) ** 2
    w[:m, m] = 1.0
    w[m, :m] = 1.0
    w[:m, m + 1:] = state.rel
    w[m + 1:, :m] = state.rel.T
    return w


def factorize(state: InterpolationState) -> None:
    """Recompute the inverse blocks from scratch at the current base.

    The system is assembled on offsets divided by their largest norm and the
    inverse blocks are rescaled back afterwards, so both the arithmetic and
    the singularity test are independent of the current point spacing.
    """
    m, n = state.m, state.n
    scale = float(np.max(np.linalg.norm(state.rel, axis=1)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    y = state.rel / scale
    w = np.zeros((m + n + 1, m + n + 1))
    w[:m, :m] = 0.5 * (y @ y.T) ** 2
    w[:m, m] = 1.0
    w[m, :m] = 1.0
    w[:m, m + 1:] = y
    w[m + 1:, :m] = y.T
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(w, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= PIVOT_TOL * diag.max():
        raise GeometryDegenerateError("interpolation system numerically singular")
    hinv = scipy.linalg.lu_solve((lu, piv), np.eye(m + n + 1), check_finite=False)
    # Undo the scaling: with T = diag(scale^-2 I_m, scale^2, scale I_n) the
    # scaled system is T W T, hence W^-1 = T (scaled inverse) T.
    s_vec = np.concatenate([[scale ** 2], np.full(n, scale)])
    omega = 0.5 * (hinv[:m, :m] + hinv[:m, :m].T) / scale ** 4
    evals, evecs = np.linalg.eigh(omega)
    order = np.argsort(-np.abs(evals))[: m - n - 1]
    zmat = evecs[:, order] * np.sqrt(np.abs(evals[order]))
    dmat = np.where(evals[order] < 0.0, -1.0, 1.0)
    xi = hinv[m:, :m] * (s_vec[:, None] / scale ** 2)
    upsilon = 0.5 * (hinv[m:, m:] + hinv[m:, m:].T) * np.outer(s_vec, s_vec)
    state.inv = InverseKKT(zmat, dmat, xi, upsilon)


def _solve_coefficients(state: InterpolationState,
                        resid: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    inv = state.inv
    lam = (inv.zmat * inv.dmat) @ (inv.zmat.T @ resid)
    cg = inv.xi @ resid
    return lam, float(cg[0]), cg[1:]


def solve_broyden(state: InterpolationState, values: np.ndarray,
                  old_model: QuadraticModel | None = None) -> QuadraticModel:
    """Interpolant of `values` whose Hessian is nearest (Frobenius) to the old
    model's; with no old model this is the minimum-Frobenius-norm interpolant."""
    if state.inv is None:
        factorize(state)
    values = np.asarray(values, dtype=float)
    if old_model is None:
        old_model = QuadraticModel.zero(state.n, state.m)
    resid = values - old_model.values_at_points(state)
    lam, c, g_inc = _solve_coefficients(state, resid)
    return QuadraticModel(
        intercept=old_model.intercept + c,
        grad=old_model.grad + g_inc,
        hess_explicit=old_model.hess_explicit.copy(),
        implicit=old_model.implicit + lam,
    )


def lagrange_polynomial(state: InterpolationState, i: int) -> QuadraticModel:
    if state.inv is None:
        factorize(state)
    inv = state.inv
    lam = inv.omega_col(i)
    return QuadraticModel(
        intercept=float(inv.xi[0, i]),
        grad=inv.xi[1:, i].copy(),
        hess_explicit=np.zeros((state.n, state.n)),
        implicit=lam,
    )


@dataclasses.dataclass
class _UpdateQuantities:
    w_m: np.ndarray
    v_m: np.ndarray
    v_tail: np.ndarray
    tau: float
    alpha: float
    beta: float
    sigma: float


def _update_quantities(state: InterpolationState, t: int,
                       x_plus: np.ndarray) -> _UpdateQuantities:
    inv = state.inv
    d = x_plus - state.base
    w_m = 0.5 * (state.rel @ d) ** 2
    w_tail = np.concatenate(([1.0], d))
    v_m = (inv.zmat * inv.dmat) @ (inv.zmat.T @ w_m) + inv.xi.T @ w_tail
    v_tail = inv.xi @ w_m + inv.upsilon @ w_tail
    tau = float(v_m[t])
    alpha = float((inv.zmat[t] * inv.dmat) @ inv.zmat[t])
    beta = float(0.5 * (d @ d) ** 2 - (w_m @ v_m + w_tail @ v_tail))
    return _UpdateQuantities(w_m, v_m, v_tail, tau, alpha, beta,
                             alpha * beta + tau * tau)


def denominator(state: InterpolationState, t: int, x_plus: np.ndarray) -> float:
    """Scalar denominator of the inverse update replacing point t by x_plus."""
    if state.inv is None:
        factorize(state)
    return _update_quantities(state, t, np.asarray(x_plus, dtype=float)).sigma


def _rotate_row_to_first(zmat: np.ndarray, t: int) -> float:
    """Right-multiply by plane rotations so row t is (zeta, 0, ..., 0)."""
    for j in range(1, zmat.shape[1]):
        a, b = zmat[t, 0], zmat[t, j]
        r = math.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        col0 = zmat[:, 0].copy()
        zmat[:, 0] = c * col0 + s * zmat[:, j]
        zmat[:, j] = -s * col0 + c * zmat[:, j]
        zmat[t, 0] = r
        zmat[t, j] = 0.0
    return float(zmat[t, 0])


def replace_point(state: InterpolationState, t: int, x_plus: np.ndarray,
                  f_new: float, c_new: np.ndarray,
                  bundle: ModelBundle | None = None) -> float:
    """Swap point t for x_plus, revise the inverse and models; returns sigma."""
    if state.inv is None:
        factorize(state)
    x_plus = np.asarray(x_plus, dtype=float)
    q = _update_quantities(state, t, x_plus)
    scale = max(1.0, abs(q.alpha * q.beta), q.tau * q.tau)
    if q.sigma <= PIVOT_TOL * scale:
        raise DenominatorZeroError(
            f"update denominator {q.sigma:.3e} too small at point {t}")

    models = bundle.all_models() if bundle is not None else []
    value_diffs = []
    for model, new_val in zip(models, _new_values(state, t, f_new, c_new, bundle)):
        value_diffs.append(new_val - model.value(state, x_plus))
        # Fold the replaced point's rank-one term into the explicit Hessian so
        # the implicit coefficients stay paired with live points.
        gamma_t = model.implicit[t]
        if gamma_t != 0.0:
            model.hess_explicit += gamma_t * np.outer(state.rel[t], state.rel[t])
            model.implicit[t] = 0.0

    inv = state.inv
    if np.all(inv.dmat > 0.0):
        zeta = _rotate_row_to_first(inv.zmat, t)
        e_minus_v = -q.v_m
        e_minus_v[t] += 1.0
        omega_t = zeta * inv.zmat[:, 0]
        xi_t = inv.xi[:, t].copy()
        inv.zmat[:, 0] = (q.tau * inv.zmat[:, 0] + zeta * e_minus_v) / math.sqrt(q.sigma)
        inv.xi += (-q.alpha * np.outer(q.v_tail, e_minus_v)
                   - q.beta * np.outer(xi_t, omega_t)
                   + q.tau * (np.outer(xi_t, e_minus_v)
                              - np.outer(q.v_tail, omega_t))) / q.sigma
        inv.upsilon += (q.alpha * np.outer(q.v_tail, q.v_tail)
                        - q.beta * np.outer(xi_t, xi_t)
                        - q.tau * (np.outer(xi_t, q.v_tail)
                                   + np.outer(q.v_tail, xi_t))) / q.sigma
        _apply_point(state, t, x_plus, f_new, c_new)
    else:
        # A negative sign in D only appears through rounding; rebuild cleanly.
        _apply_point(state, t, x_plus, f_new, c_new)
        factorize(state)

    inv = state.inv
    lam_col = inv.omega_col(t)
    cg_col = inv.xi[:, t]
    for model, diff in zip(models, value_diffs):
        model.implicit += diff * lam_col
        model.intercept += diff * cg_col[0]
        model.grad += diff * cg_col[1:]
    return q.sigma


def _new_values(state, t, f_new, c_new, bundle):
    if bundle is None:
        return []
    return [f_new, *np.asarray(c_new, dtype=float)]


def _apply_point(state, t, x_plus, f_new, c_new):
    state.rel[t] = x_plus - state.base
    state.fvals[t] = f_new
    if state.cvals.shape[1]:
        state.cvals[t] = c_new


def shift_base(state: InterpolationState, models: list[QuadraticModel],
               new_base: np.ndarray) -> None:
    """Re-express models at a new base and refactorize the inverse there."""
    new_base = np.asarray(new_base, dtype=float)
    for model in models:
        hess = model.dense_hess(state)
        model.intercept = model.value(state, new_base)
        model.grad = model.gradient(state, new_base)
        model.hess_explicit = hess
        model.implicit = np.zeros(state.m)
    state.rel = state.rel + (state.base - new_base)
    state.base = new_base
    factorize(state)


# ---------------------------------------------------------------------------
# Reference interpolation set on coordinate directions and its closed forms.
# Used as test oracles and by the poisedness diagnostics.

def zm_points(n: int, m: int, delta: float = 1.0) -> np.ndarray:
    """Origin, +delta steps along all axes, -delta steps along the first
    m - n - 1 axes."""
    if not n + 2 <= m <= 2 * n + 1:
        raise ValueError("requires n + 2 <= m <= 2n + 1")
    pts = np.zeros((m, n))
    for j in range(n):
        pts[1 + j, j] = delta
    for j in range(m - n - 1):
        pts[n + 1 + j, j] = -delta
    return pts


def lagrange_zm_value(n: int, m: int, delta: float, i: int, x: np.ndarray) -> float:
    """Closed-form minimum-Frobenius Lagrange polynomial value on the set above.

    ``i`` is 1-based to match the point numbering of :func:`zm_points`.
    """
    if not 1 <= i <= m <= 2 * n + 1:
        raise ValueError("invalid index or point count")
    x = np.asarray(x, dtype=float)
    if i == 1:
        head = np.sum(x[: m - n - 1] ** 2) / delta ** 2
        tail = np.sum(x[m - n - 1: n]) / delta
        return float(1.0 - head - tail)
    if i <= m - n:
        xi = x[i - 2]
        return float(xi ** 2 / (2.0 * delta ** 2) + xi / (2.0 * delta))
    if i <= n + 1:
        return float(x[i - 2] / delta)
    xi = x[i - n - 2]
    return float(xi ** 2 / (2.0 * delta ** 2) - xi / (2.0 * delta))


def lambda_poisedness_zm(n: int, m: int, p: float, delta: float = 1.0) -> float:
    """Exact poisedness constant of the reference set over the l_p ball of
    radius delta (the constant does not depend on delta — rescaling the ball
    rescales the set identically).

    Known in closed form for p in {1, 2} and, when m = 2n + 1, for every
    p >= 1; other combinations are not available.
    """
    del delta
    if not n + 2 <= m <= 2 * n + 1:
        raise ValueError("requires n + 2 <= m <= 2n + 1")
    if p == 1:
        return 2.0 if m <= 2 * n else 1.0
    if p == 2:
        return 1.0 + math.sqrt(2 * n + 1 - m)
    if m == 2 * n + 1 and p >= 1:
        power = float(n) if math.isinf(p) else float(n) ** ((p - 2.0) / p)
        return max(1.0, power - 1.0)
    raise NotImplementedError(f"no closed form for m = {m}, p = {p}")
