"""Trust-region subproblem solvers.

All solvers are truncated-conjugate-gradient (TCG) variants operating on a
quadratic model around the origin:

- ``tcg``: plain Steihaug-Toint iteration inside a ball;
- ``tcg_bound``: active-set variant that fixes hit bounds permanently, with
  ``boundary_refine`` to move a boundary solution round the sphere;
- ``tcg_linear``: active-set variant for linear inequality/equality rows whose
  working set is defined through projections onto polar cones;
- ``normal_subproblem``: piecewise-quadratic constraint-violation reduction,
  lifted to a quadratic by one slack block and solved with the linear TCG
  machinery under a seminorm trust region;
- ``nnls`` / ``lsq_multipliers``: active-set nonnegative least squares and the
  least-squares Lagrange multiplier estimation built on it;
- ``geometry_bobyqa`` / ``geometry_lincoa``: approximate maximizers of
  |Lagrange polynomial| used to repair interpolation geometry.

Solvers are pure functions of their inputs; outcomes carry the visited
iterates so that feasibility and monotonicity are directly checkable.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

from .models import InterpolationState, QuadraticModel

__all__ = [
    "QuadObjective",
    "TcgOutcome",
    "tcg",
    "tcg_bound",
    "boundary_refine",
    "project_polar",
    "tcg_linear",
    "normal_subproblem",
    "nnls",
    "lsq_multipliers",
    "geometry_bobyqa",
    "geometry_lincoa",
]

# Relative-reduction factor of the two extra TCG stopping tests.
NU = 0.01
# Trigger threshold for moving a boundary solution round the sphere.
XI_REFINE = 1e-4
# Near-active constraint threshold of the linearly constrained TCG.
SIGMA_NEAR = 0.2


@dataclasses.dataclass
class QuadObjective:
    """Quadratic s -> grad^T s + 0.5 s^T H s (value at the origin is zero)."""

    grad: np.ndarray
    hess_vec: Callable[[np.ndarray], np.ndarray]

    def value(self, s: np.ndarray) -> float:
        return float(self.grad @ s + 0.5 * (s @ self.hess_vec(s)))

    def gradient(self, s: np.ndarray) -> np.ndarray:
        return self.grad + self.hess_vec(s)


@dataclasses.dataclass
class TcgOutcome:
    step: np.ndarray
    working_set: np.ndarray            # indices of active bounds/rows
    status: str                        # converged | boundary | budget
    reduction: float
    history: list = dataclasses.field(default_factory=list)
    final_p: np.ndarray | None = None  # search direction at a gradient stop
    stopped_at_top: bool = False       # True iff grad^T p >= 0 fired


def _ball_alpha(s: np.ndarray, p: np.ndarray, delta: float,
                mask: np.ndarray | None = None) -> float:
    """Largest alpha >= 0 with ||s + alpha p|| <= delta (seminorm if masked)."""
    if mask is not None:
        s, p = s[mask], p[mask]
    pp = float(p @ p)
    if pp == 0.0:
        return math.inf
    sp = float(s @ p)
    slack = max(delta * delta - float(s @ s), 0.0)
    root = math.sqrt(sp * sp + pp * slack)
    if sp <= 0.0:
        return (root - sp) / pp
    return slack / (root + sp)


def _bound_alpha(s: np.ndarray, p: np.ndarray, l: np.ndarray,
                 u: np.ndarray) -> tuple[float, int]:
    """Largest alpha with l <= s + alpha p <= u, and the first bound hit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(p > 0.0, (u - s) / p,
                          np.where(p < 0.0, (l - s) / p, math.inf))
    ratios = np.where(np.isnan(ratios), math.inf, np.maximum(ratios, 0.0))
    idx = int(np.argmin(ratios))
    alpha = float(ratios[idx])
    return alpha, (idx if math.isfinite(alpha) else -1)


def _row_alpha(s: np.ndarray, p: np.ndarray, a_mat: np.ndarray,
               b: np.ndarray) -> tuple[float, int]:
    """Largest alpha with A(s + alpha p) <= b, and the first row hit.

    Rows with a_j^T p at roundoff level (relative to ||a_j|| ||p||) are
    ignored: the cone projections leave O(eps) positive residues on active
    rows, which would otherwise pin alpha at zero forever.
    """
    if a_mat.shape[0] == 0:
        return math.inf, -1
    resid = np.maximum(b - a_mat @ s, 0.0)
    ap = a_mat @ p
    tiny = 1e-13 * np.linalg.norm(a_mat, axis=1) * float(np.linalg.norm(p))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(ap > tiny, resid / ap, math.inf)
    ratios = np.where(np.isnan(ratios), math.inf, ratios)
    idx = int(np.argmin(ratios))
    alpha = float(ratios[idx])
    return alpha, (idx if math.isfinite(alpha) else -1)


def tcg(q: QuadObjective, delta: float) -> TcgOutcome:
    """Steihaug-Toint truncated conjugate gradients inside the delta-ball."""
    n = q.grad.size
    s = np.zeros(n)
    g = q.grad.copy()
    p = -g
    history: list[np.ndarray] = []
    status = "budget"
    stopped_at_top = False
    # In exact arithmetic the gradient test fires exactly when p = 0; under
    # roundoff a noise-level p must be caught by norm as well.
    p_eps = 1e-10 * float(np.linalg.norm(q.grad))
    for k in range(n + 1):
        if float(g @ p) >= 0.0 or float(np.linalg.norm(p)) <= p_eps:
            status = "converged"
            stopped_at_top = True
            break
        if k == n:
            break
        hp = q.hess_vec(p)
        php = float(p @ hp)
        gp = float(g @ p)
        alpha_q = -gp / php if php > 0.0 else math.inf
        alpha_d = _ball_alpha(s, p, delta)
        alpha = min(alpha_q, alpha_d)
        g_old_sq = float(g @ g)
        s = s + alpha * p
        g = g + alpha * hp
        history.append(s.copy())
        if alpha >= alpha_d:
            status = "boundary"
            break
        beta = float(g @ g) / g_old_sq
        p = -g + beta * p
    return TcgOutcome(s, np.empty(0, dtype=int), status,
                      max(-q.value(s), 0.0), history, p, stopped_at_top)


def tcg_bound(q: QuadObjective, l: np.ndarray, u: np.ndarray,
              delta: float) -> TcgOutcome:
    """Active-set TCG under bounds: hit bounds are fixed for good."""
    n = q.grad.size
    g0 = q.grad
    fixed = ((l == 0.0) & (g0 >= 0.0)) | ((u == 0.0) & (g0 <= 0.0))
    s = np.zeros(n)
    g = g0.copy()
    free = ~fixed
    p = np.where(free, -g, 0.0)
    history: list[np.ndarray] = []
    q_s = 0.0
    status = "budget"
    stopped_at_top = False
    p_eps = 1e-10 * float(np.linalg.norm(g0))
    max_iter = n * (n + 2) + 4
    for _ in range(max_iter):
        if float(g @ p) >= 0.0 or float(np.linalg.norm(p)) <= p_eps:
            status = "converged"
            stopped_at_top = True
            break
        g_proj = np.where(free, g, 0.0)
        # Expected remaining reduction along the current piece is small.
        if float(np.linalg.norm(g_proj)) * delta <= NU * (-q_s):
            status = "converged"
            break
        hp = q.hess_vec(p)
        php = float(p @ hp)
        gp = float(g @ p)
        alpha_q = -gp / php if php > 0.0 else math.inf
        alpha_d = _ball_alpha(s, p, delta)
        alpha_b, hit = _bound_alpha(s, p, l, u)
        alpha = min(alpha_q, alpha_d, alpha_b)
        g_proj_old_sq = float(g_proj @ g_proj)
        q_prev = q_s
        if alpha > 0.0:
            s = s + alpha * p
            g = g + alpha * hp
        if alpha == alpha_b and hit >= 0:
            s[hit] = u[hit] if p[hit] > 0.0 else l[hit]
        s = np.minimum(np.maximum(s, l), u)
        q_s = q.value(s)
        history.append(s.copy())
        # Tiny per-iteration reduction relative to the total (skipped for
        # zero-length working-set restarts, which move nothing).
        small_gain = alpha > 0.0 and (q_prev - q_s) <= NU * (-q_s)
        if alpha < min(alpha_d, alpha_b):
            if small_gain:
                status = "converged"
                break
            g_proj = np.where(free, g, 0.0)
            beta = float(g_proj @ g_proj) / g_proj_old_sq
            p = -g_proj + beta * p
        elif alpha < alpha_d:
            fixed[hit] = True
            free = ~fixed
            if small_gain:
                status = "converged"
                break
            p = np.where(free, -g, 0.0)
        else:
            status = "boundary"
            break
    return TcgOutcome(s, np.flatnonzero(fixed), status,
                      max(-q_s, 0.0), history, p, stopped_at_top)


def boundary_refine(q: QuadObjective, s_star: np.ndarray, l: np.ndarray,
                    u: np.ndarray, delta: float,
                    working: Sequence[int]) -> np.ndarray:
    """Move a boundary solution round the sphere in the plane spanned by the
    free parts of the point and the gradient, fixing freshly hit bounds."""
    n = s_star.size
    s = s_star.copy()
    fixed = np.zeros(n, dtype=bool)
    fixed[np.asarray(list(working), dtype=int)] = True
    for _ in range(max(n - int(fixed.sum()), 0)):
        free = ~fixed
        ps = np.where(free, s, 0.0)
        pg = np.where(free, q.gradient(s), 0.0)
        ps_sq = float(ps @ ps)
        pg_sq = float(pg @ pg)
        cross = float(ps @ pg)
        gain = -q.value(s)
        if ps_sq * pg_sq - cross * cross <= XI_REFINE * gain * gain:
            break
        w = -(pg - (cross / ps_sq) * ps)
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            break
        w *= math.sqrt(ps_sq) / w_norm

        def arc(theta: float) -> np.ndarray:
            return s + (math.cos(theta) - 1.0) * ps + math.sin(theta) * w

        def feasible(theta: float) -> bool:
            x = arc(theta)
            return bool(np.all(x >= l) and np.all(x <= u))

        theta_hi = 0.5 * math.pi
        grid = np.linspace(0.0, theta_hi, 129)
        bad = next((t for t in grid[1:] if not feasible(t)), None)
        if bad is not None:
            lo, hi = max(bad - grid[1], 0.0), bad
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                if feasible(mid):
                    lo = mid
                else:
                    hi = mid
            theta_hi = lo
        theta = _golden_min(lambda t: q.value(arc(t)), 0.0, theta_hi)
        candidates = [0.0, theta, theta_hi]
        values = [q.value(arc(t)) for t in candidates]
        theta_best = candidates[int(np.argmin(values))]
        if theta_best <= 0.0:
            break
        s = arc(theta_best)
        if bad is None or theta_best < theta_hi:
            break
        # Bound-limited: snap and fix the first touching coordinate, go again.
        hit = -1
        for i in np.flatnonzero(free):
            span = max(1.0, abs(u[i]) if math.isfinite(u[i]) else 1.0,
                       abs(l[i]) if math.isfinite(l[i]) else 1.0)
            if u[i] - s[i] <= 1e-9 * span:
                s[i] = u[i]
                hit = i
                break
            if s[i] - l[i] <= 1e-9 * span:
                s[i] = l[i]
                hit = i
                break
        if hit < 0:
            break
        fixed[hit] = True
    return np.minimum(np.maximum(s, l), u)


def _golden_min(fun: Callable[[float], float], lo: float, hi: float,
                iters: int = 20) -> float:
    """Golden-section minimization on [lo, hi] with a fixed iteration count."""
    if hi <= lo:
        return lo
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return c if fc <= fd else d


def project_polar(g: np.ndarray, rows: np.ndarray,
                  c_mat: np.ndarray) -> np.ndarray:
    """min ||p - g|| subject to rows @ p <= 0 and c_mat @ p = 0.

    By Moreau decomposition, p = g minus the projection of g onto the polar
    cone spanned by the row gradients (nonnegative weights on inequality
    rows, free weights on equality rows) — a small NNLS problem.
    """
    n = g.size
    rows = np.asarray(rows, dtype=float).reshape(-1, n)
    c_mat = np.asarray(c_mat, dtype=float).reshape(-1, n)
    n_ineq = rows.shape[0]
    if n_ineq == 0 and c_mat.shape[0] == 0:
        return g.copy()
    basis = np.vstack([rows, c_mat]).T
    theta = nnls(basis, g, n_ineq)
    return g - basis @ theta


def tcg_linear(q: QuadObjective, a_mat: np.ndarray, b: np.ndarray,
               c_mat: np.ndarray, delta: float, sigma: float = SIGMA_NEAR,
               d_mask: np.ndarray | None = None) -> TcgOutcome:
    """Active-set TCG under A s <= b (b >= 0), C s = 0, ||s|| <= delta.

    The working set holds near-active inequality rows whose polar-cone
    projection pins the search direction; equality rows are always enforced.
    With ``d_mask`` the trust region uses the seminorm over the masked
    coordinates only.
    """
    n = q.grad.size
    a_mat = np.asarray(a_mat, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    c_mat = np.asarray(c_mat, dtype=float).reshape(-1, n)
    if b.size and float(b.min()) < 0.0:
        raise ValueError("origin must be feasible: b >= 0 required")
    row_norms = np.linalg.norm(a_mat, axis=1) if a_mat.size else np.zeros(0)

    def near_active(s: np.ndarray) -> np.ndarray:
        if a_mat.shape[0] == 0:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(b - a_mat @ s <= sigma * delta * row_norms)

    def restart(s: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        j_set = near_active(s)
        p_new = project_polar(-g, a_mat[j_set], c_mat)
        p_scale = max(float(np.linalg.norm(p_new)), 1.0)
        active = [j for j in j_set
                  if abs(float(a_mat[j] @ p_new)) <= 1e-10 * row_norms[j] * p_scale]
        return p_new, np.asarray(active, dtype=int)

    s = np.zeros(n)
    g = q.grad.copy()
    p, w_set = restart(s, g)
    proj = _null_projector(a_mat[w_set], c_mat)
    history: list[np.ndarray] = []
    q_s = 0.0
    status = "budget"
    stopped_at_top = False
    p_eps = 1e-10 * float(np.linalg.norm(q.grad))
    max_iter = 10 * (n + a_mat.shape[0] + 1)
    for _ in range(max_iter):
        gp = float(g @ p)
        if gp >= 0.0 or float(np.linalg.norm(p)) <= p_eps:
            status = "converged"
            stopped_at_top = True
            break
        hp = q.hess_vec(p)
        php = float(p @ hp)
        alpha_q = -gp / php if php > 0.0 else math.inf
        alpha_d = _ball_alpha(s, p, delta, d_mask)
        # Expected remaining reduction along this direction is negligible.
        if alpha_d * abs(gp) <= NU * (-q_s):
            status = "converged"
            break
        alpha_l, _hit = _row_alpha(s, p, a_mat, b)
        alpha = min(alpha_q, alpha_d, alpha_l)
        if not math.isfinite(alpha):
            status = "budget"
            break
        g_proj_old = proj(g)
        q_prev = q_s
        if alpha > 0.0:
            s = s + alpha * p
            g = g + alpha * hp
        q_s = q.value(s)
        history.append(s.copy())
        small_gain = alpha > 0.0 and (q_prev - q_s) <= NU * (-q_s)
        if alpha < min(alpha_d, alpha_l):
            if small_gain:
                status = "converged"
                break
            g_proj = proj(g)
            denom = float(g_proj_old @ g_proj_old)
            beta = float(g_proj @ g_proj) / denom if denom > 0.0 else 0.0
            p = -g_proj + beta * p
        elif alpha < alpha_d:
            if small_gain:
                status = "converged"
                break
            p, w_set = restart(s, g)
            proj = _null_projector(a_mat[w_set], c_mat)
        else:
            status = "boundary"
            break
    return TcgOutcome(s, w_set, status, max(-q_s, 0.0), history, p,
                      stopped_at_top)


def _null_projector(rows: np.ndarray,
                    c_mat: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Orthogonal projector onto the null space of the stacked rows."""
    stack = np.vstack([rows, c_mat]) if rows.size or c_mat.size else None
    if stack is None or stack.shape[0] == 0:
        return lambda z: z
    pinv = np.linalg.pinv(stack)

    def proj(z: np.ndarray) -> np.ndarray:
        return z - pinv @ (stack @ z)

    return proj


def normal_subproblem(a_ineq: np.ndarray, b_ineq: np.ndarray,
                      a_eq: np.ndarray, b_eq: np.ndarray, l: np.ndarray,
                      u: np.ndarray, delta: float) -> np.ndarray:
    """Approximately minimize ||[A z - b]_+||^2 + ||A_eq z - b_eq||^2 under
    bounds and ||z|| <= delta.

    The positive-part term is lifted with one slack variable per inequality,
    giving a quadratic program solved by the linear TCG under the seminorm
    that measures only the z-block.
    """
    n = l.size
    a_ineq = np.asarray(a_ineq, dtype=float).reshape(-1, n)
    b_ineq = np.asarray(b_ineq, dtype=float).reshape(-1)
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    m1 = a_ineq.shape[0]
    if m1 == 0 and a_eq.shape[0] == 0:
        return np.zeros(n)

    v0 = np.maximum(-b_ineq, 0.0)
    gram = 2.0 * (a_eq.T @ a_eq)
    grad_z = -2.0 * (a_eq.T @ b_eq)

    def hess_vec(p: np.ndarray) -> np.ndarray:
        return np.concatenate([gram @ p[:n], 2.0 * p[n:]])

    q = QuadObjective(np.concatenate([grad_z, 2.0 * v0]), hess_vec)

    finite_u = np.flatnonzero(np.isfinite(u))
    finite_l = np.flatnonzero(np.isfinite(l))
    eye = np.eye(n)
    blocks = [np.hstack([a_ineq, -np.eye(m1)]),
              np.hstack([np.zeros((m1, n)), -np.eye(m1)]),
              np.hstack([eye[finite_u], np.zeros((finite_u.size, m1))]),
              np.hstack([-eye[finite_l], np.zeros((finite_l.size, m1))])]
    rhs = np.concatenate([np.maximum(b_ineq, 0.0), v0, u[finite_u],
                          -l[finite_l]])
    a_full = np.vstack(blocks)
    d_mask = np.concatenate([np.ones(n, dtype=bool), np.zeros(m1, dtype=bool)])
    out = tcg_linear(q, a_full, rhs, np.zeros((0, n + m1)), delta,
                     d_mask=d_mask)
    z = out.step[:n]
    z = np.minimum(np.maximum(z, l), u)
    z_norm = float(np.linalg.norm(z))
    if z_norm > delta:
        z *= delta / z_norm
    return z


def nnls(a_mat: np.ndarray, b: np.ndarray, n0: int) -> np.ndarray:
    """Least squares min 0.5||A s - b||^2 with s_i >= 0 for i < n0.

    Active-set method: the working set holds constrained coordinates pinned at
    zero; each trial point is the least-norm solution with those columns
    removed, and infeasible trials back-track along the segment from the
    current point. Iterations are capped at 3n against roundoff cycling.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a_mat.shape
    if n == 0:
        return np.zeros(0)
    scale = float(np.linalg.norm(a_mat))
    tol = 1e-11 * max(1.0, scale * (scale + float(np.linalg.norm(b))))

    def least_norm(working: np.ndarray) -> np.ndarray:
        masked = a_mat.copy()
        masked[:, working] = 0.0
        sol = np.linalg.lstsq(masked, b, rcond=None)[0]
        sol[working] = 0.0
        return sol

    def kkt_holds(s: np.ndarray, grad: np.ndarray) -> bool:
        lo = grad[:n0]
        if np.any(lo < -tol):
            return False
        hot = np.abs(grad) <= tol
        mask = np.ones(n, dtype=bool)
        mask[:n0] = s[:n0] > 0.0
        return bool(np.all(hot[mask]))

    s = np.zeros(n)
    working = np.arange(n0)
    best = s.copy()
    best_val = 0.5 * float(np.linalg.norm(b) ** 2)
    solved_free = False
    for _ in range(3 * n):
        grad = a_mat.T @ (a_mat @ s - b)
        val = 0.5 * float(np.linalg.norm(a_mat @ s - b) ** 2)
        if val < best_val:
            best, best_val = s.copy(), val
        if kkt_holds(s, grad):
            return s
        if working.size and float(np.min(grad[working])) < -tol:
            inside = grad[working]
            drop = working[int(np.argmin(inside))]
            working = working[working != drop]
        elif solved_free:
            # No working coordinate wants to leave and the free block is
            # already least-squares optimal: nothing further can change.
            return s
        p = least_norm(working)
        free_con = np.setdiff1d(np.arange(n0), working)
        while np.any(p[free_con] <= 0.0):
            viol = free_con[p[free_con] <= 0.0]
            num = s[viol]
            den = s[viol] - p[viol]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(den > 0.0, num / den, 0.0)
            alpha = float(np.min(ratios))
            s = s + alpha * (p - s)
            s[viol[int(np.argmin(ratios))]] = 0.0
            zeroed = np.flatnonzero(np.abs(s[:n0]) <= 1e-13 * max(1.0, float(np.max(np.abs(s)))))
            s[zeroed] = 0.0
            working = np.union1d(working, zeroed)
            p = least_norm(working)
            free_con = np.setdiff1d(np.arange(n0), working)
        s = p
        solved_free = True
    return best


def lsq_multipliers(grad_f: np.ndarray, ineq_grads: np.ndarray,
                    ineq_active: np.ndarray,
                    eq_grads: np.ndarray) -> np.ndarray:
    """Least-squares multipliers: min ||grad_f + sum lambda_i grad_c_i|| with
    zero multipliers on inactive inequalities, nonnegative multipliers on the
    remaining inequalities, and free multipliers on equalities."""
    n = grad_f.size
    ineq_grads = np.asarray(ineq_grads, dtype=float).reshape(-1, n)
    eq_grads = np.asarray(eq_grads, dtype=float).reshape(-1, n)
    ineq_active = np.asarray(ineq_active, dtype=bool).reshape(-1)
    active_idx = np.flatnonzero(ineq_active)
    basis = np.vstack([ineq_grads[active_idx], eq_grads]).T
    lam = np.zeros(ineq_grads.shape[0] + eq_grads.shape[0])
    if basis.shape[1] == 0:
        return lam
    sol = nnls(basis, -grad_f, active_idx.size)
    lam[active_idx] = sol[: active_idx.size]
    lam[ineq_grads.shape[0]:] = sol[active_idx.size:]
    return lam


def _line_interval(w: np.ndarray, sl: np.ndarray, su: np.ndarray,
                   delta: float) -> tuple[float, float]:
    """Feasible alpha-range of {alpha w} within [sl, su] and the delta-ball."""
    lo, hi = -math.inf, math.inf
    for wi, li, ui in zip(w, sl, su):
        if wi > 0.0:
            hi = min(hi, ui / wi)
            lo = max(lo, li / wi)
        elif wi < 0.0:
            hi = min(hi, li / wi)
            lo = max(lo, ui / wi)
    w_norm = float(np.linalg.norm(w))
    if w_norm > 0.0:
        hi = min(hi, delta / w_norm)
        lo = max(lo, -delta / w_norm)
    return lo, hi


def _quad_extrema_on_interval(half_curv: float, slope: float, value0: float,
                              lo: float, hi: float,
                              want_max_abs: bool) -> tuple[float, float]:
    """Optimize q(a) = value0 + slope*a + half_curv*a^2 on [lo, hi]; returns
    (best alpha, attained |q| or q depending on the mode)."""
    candidates = [lo, hi]
    if half_curv != 0.0:
        vertex = -slope / (2.0 * half_curv)
        if lo < vertex < hi:
            candidates.append(vertex)
    if lo <= 0.0 <= hi:
        candidates.append(0.0)
    best_a, best_v = 0.0, -math.inf
    for a in candidates:
        if not math.isfinite(a):
            continue
        qa = value0 + slope * a + half_curv * a * a
        score = abs(qa) if want_max_abs else -qa
        if score > best_v:
            best_a, best_v = a, score
    return best_a, best_v


def _clipped_ray_endpoint(g: np.ndarray, sl: np.ndarray, su: np.ndarray,
                          delta: float) -> np.ndarray:
    """Minimizer of g^T s over the box intersected with the delta-ball: the
    point clip(-t g) with the largest feasible t (possibly fully clipped)."""
    full = np.where(g > 0, sl, np.where(g < 0, su, 0.0))
    if float(np.linalg.norm(full)) <= delta:
        return full

    def norm_at(t: float) -> float:
        return float(np.linalg.norm(np.minimum(np.maximum(-t * g, sl), su)))

    t_hi = 1.0
    while norm_at(t_hi) < delta:
        t_hi *= 2.0
    t_lo = 0.0
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        if norm_at(mid) < delta:
            t_lo = mid
        else:
            t_hi = mid
    return np.minimum(np.maximum(-t_hi * g, sl), su)


def geometry_bobyqa(lag: QuadraticModel, l: np.ndarray, u: np.ndarray,
                    delta: float, state: InterpolationState) -> np.ndarray:
    """Geometry step maximizing |lagrange| around the current iterate: the
    better of a constrained Cauchy step (for each sign) and the best step
    along the lines through the iterate and every other interpolation point."""
    xk = state.point(state.current_index)
    sl = l - xk
    su = u - xk
    value0 = lag.value(state, xk)
    grad0 = lag.gradient(state, xk)

    best_step = np.zeros(xk.size)
    best_val = abs(value0)

    for sign in (1.0, -1.0):
        direction = _clipped_ray_endpoint(sign * grad0, sl, su, delta)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            continue
        slope = sign * float(grad0 @ direction)
        half_curv = sign * 0.5 * float(direction @ lag.hess_vec(state, direction))
        lo, hi = _line_interval(direction, sl, su, delta)
        alpha, _ = _quad_extrema_on_interval(half_curv, slope, sign * value0,
                                             max(lo, 0.0), min(hi, 1.0),
                                             want_max_abs=False)
        step = alpha * direction
        val = abs(value0 + grad0 @ step
                  + 0.5 * step @ lag.hess_vec(state, step))
        if val > best_val:
            best_step, best_val = step, val

    for y in state.points:
        w = y - xk
        if float(np.linalg.norm(w)) == 0.0:
            continue
        slope = float(grad0 @ w)
        half_curv = 0.5 * float(w @ lag.hess_vec(state, w))
        lo, hi = _line_interval(w, sl, su, delta)
        if not lo <= hi:
            continue
        alpha, val = _quad_extrema_on_interval(half_curv, slope, value0,
                                               lo, hi, want_max_abs=True)
        if val > best_val:
            best_step, best_val = alpha * w, val
    return best_step


def geometry_lincoa(lag: QuadraticModel, active_rows: np.ndarray,
                    delta: float, l: np.ndarray, u: np.ndarray,
                    state: InterpolationState) -> np.ndarray:
    """Geometry step along the Lagrange gradient projected onto the null
    space of the active constraint rows, line-maximizing |lagrange|."""
    xk = state.point(state.current_index)
    n = xk.size
    grad0 = lag.gradient(state, xk)
    active_rows = np.asarray(active_rows, dtype=float).reshape(-1, n)
    direction = project_polar(grad0, np.zeros((0, n)), active_rows)
    d_norm = float(np.linalg.norm(direction))
    if d_norm <= 1e-12 * max(1.0, float(np.linalg.norm(grad0))):
        return np.zeros(n)
    sl = l - xk
    su = u - xk
    value0 = lag.value(state, xk)
    slope = float(grad0 @ direction)
    half_curv = 0.5 * float(direction @ lag.hess_vec(state, direction))
    lo, hi = _line_interval(direction, sl, su, delta)
    if not lo <= hi:
        return np.zeros(n)
    alpha, _ = _quad_extrema_on_interval(half_curv, slope, value0, lo, hi,
                                         want_max_abs=True)
    return alpha * direction
