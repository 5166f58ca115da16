"""Derivative-free trust-region SQP driver.

Orchestrates the interpolation machinery and the trust-region subproblem
solvers: composite Byrd-Omojokun steps on the models, an exact-penalty merit
function with an adaptive parameter, trust-region radius and resolution
schedules, interpolation-set maintenance with geometry repair, and selection
of the best visited point over the whole evaluation history.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

from .models import (
    DenominatorZeroError,
    GeometryDegenerateError,
    InterpolationState,
    ModelBundle,
    denominator,
    factorize,
    initial_interpolation_set,
    lagrange_polynomial,
    replace_point,
    shift_base,
    solve_broyden,
)
from .problem import (
    ConfigurationError,
    EvalRecord,
    InfeasibleBoundsError,
    Problem,
    preprocess,
)
from .subsolvers import (
    QuadObjective,
    boundary_refine,
    geometry_bobyqa,
    geometry_lincoa,
    lsq_multipliers,
    normal_subproblem,
    tcg_bound,
    tcg_linear,
)

# Stored objective/constraint values are clipped to this magnitude so that a
# stray infinity cannot poison the interpolation system.
BARRIER = 2.0 ** 100

ETA_FAIL = 0.1        # rho at or below this: the trial step failed
ETA_GOOD = 0.7        # rho above this: the trial step did very well
ETA_STALL = 0.01      # rho threshold in the model-replacement test
THETA_CLAMP = 1.4     # radii at most this multiple of the resolution snap to it
RATIO_COARSE = 250.0  # resolution/final-resolution ratio for the 0.1x schedule
RATIO_MID = 16.0      # ... for the geometric-mean schedule
ZETA_NORMAL = 0.8     # fraction of the trust region granted to the normal step
PENALTY_NEAR = 1.5    # penalties within this factor of the threshold get bumped
PENALTY_BUMP = 2.0    # bump factor for the penalty parameter
SWAP_GRAD_RATIO = 10.0
SWAP_STREAK = 3
SHORT_HALF_LIMIT = 5  # consecutive steps below delta/2 before lowering delta_lb
SHORT_TENTH_LIMIT = 3
FEASIBILITY_RTOL = 1e-12   # scale factor in the normal-step skip test
TARGET_FEAS_TOL = 1e-8     # feasibility required for the target-value stop
GEOMETRY_FEAS_TOL = 1e-8   # linearized-feasibility gate in the geometry phase
GEOMETRY_SIGMA_RATIO = 0.1
BASE_SHIFT_FACTOR = 10.0   # shift the model base when the iterate drifts this
                           # many radii away from it

_MESSAGES = {
    "radius-target": "the lower bound on the trust-region radius has been reached",
    "maxfev": "the maximum number of function evaluations has been reached",
    "maxiter": "the maximum number of iterations has been reached",
    "target-reached": "the target objective value has been reached",
    "rounding-stop": "computer rounding errors prevent further progress",
    "all-fixed": "all variables are fixed by the bound constraints",
    "infeasible-bounds": "the bound constraints are infeasible",
}


@dataclasses.dataclass
class Options:
    """Solver options; ``None`` entries resolve to dimension-based defaults."""

    rhobeg: float = 1.0
    rhoend: float = 1e-6
    npt: int | None = None      # number of interpolation points, default 2n + 1
    maxfev: int | None = None   # evaluation budget, default 500 n
    maxiter: int | None = None  # iteration budget, default 1000 n
    target: float = -math.inf
    disp: bool = False
    debug: bool = False
    # "broyden": least-change model updates with the stalled-model replacement
    # heuristic; "min_frobenius": rebuild minimum-norm models every iteration.
    model_policy: str = "broyden"


@dataclasses.dataclass
class TrustRegionState:
    """Mutable per-solve quantities of the trust-region loop."""

    delta: float                 # trust-region radius
    resolution: float            # lower bound on the radius
    gamma: float = 0.0           # merit penalty parameter
    lam: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0))
    short_half_count: int = 0    # consecutive steps shorter than delta/2
    short_tenth_count: int = 0   # consecutive steps shorter than delta/10
    swap_count: int = 0          # model-replacement streak


@dataclasses.dataclass
class SolveResult:
    x: np.ndarray
    status: str
    message: str
    fun: float
    jac: np.ndarray
    nfev: int
    nit: int
    maxcv: float


class _Terminate(Exception):
    """Internal control-flow signal carrying the stopping status."""

    def __init__(self, status: str):
        super().__init__(status)
        self.status = status


# ---------------------------------------------------------------------------
# Merit function and penalty management.

def violation_norm(cub: np.ndarray, ceq: np.ndarray) -> float:
    """l2 norm of the constraint violation: positive parts of inequality
    residuals and full equality residuals; bounds never enter."""
    cub = np.asarray(cub, dtype=float)
    ceq = np.asarray(ceq, dtype=float)
    total = float(np.sum(np.maximum(cub, 0.0) ** 2) + np.sum(ceq ** 2))
    return math.sqrt(total)


def merit_actual(f: float, cub: np.ndarray, ceq: np.ndarray,
                 gamma: float) -> float:
    """Exact-penalty merit of an evaluated point."""
    return f + gamma * violation_norm(cub, ceq)


def merit_model(qp_value: float, phi_step: float, gamma: float) -> float:
    """Merit of a step under the models: quadratic objective change plus the
    weighted linearized violation ``phi_step`` at that step."""
    return qp_value + gamma * phi_step


def penalty_increase(gamma_prev: float, lam: np.ndarray, qp_value: float,
                     phi_zero: float, phi_step: float) -> float:
    """Raise the penalty so the trial step does not increase the model merit.

    ``qp_value`` is the quadratic objective change of the step, ``phi_zero``
    and ``phi_step`` the linearized violations at the origin and at the step.
    The least sufficient penalty is zero when the violation is unchanged and
    the positive part of qp_value / (phi_zero - phi_step) otherwise; penalties
    within PENALTY_NEAR of the threshold jump to PENALTY_BUMP times it.
    """
    if phi_step >= phi_zero:
        # The composite step never increases the linearized violation, so any
        # apparent increase is rounding noise and no penalty is needed.
        least = 0.0
    else:
        least = max(0.0, qp_value / (phi_zero - phi_step))
    threshold = max(least, float(np.linalg.norm(lam)))
    if gamma_prev <= PENALTY_NEAR * threshold:
        return PENALTY_BUMP * threshold
    return gamma_prev


def penalty_reduce(fvals: np.ndarray, ineq_vals: np.ndarray,
                   eq_vals: np.ndarray, gamma: float) -> float:
    """Lower the penalty after a resolution reduction.

    ``ineq_vals``/``eq_vals`` hold constraint values over the interpolation
    set, one row per point; equalities count as two opposite inequalities.
    Constraints that stay comfortably satisfied over the set are ignored; with
    none left the penalty drops to zero, otherwise it is capped by the ratio
    of the objective spread to the smallest constraint spread.
    """
    fvals = np.asarray(fvals, dtype=float)
    ineq_vals = np.asarray(ineq_vals, dtype=float).reshape(fvals.size, -1)
    eq_vals = np.asarray(eq_vals, dtype=float).reshape(fvals.size, -1)
    rows = np.hstack([ineq_vals, eq_vals, -eq_vals])
    if rows.shape[1] == 0:
        return 0.0
    cmin = rows.min(axis=0)
    cmax = rows.max(axis=0)
    important = cmin < 2.0 * cmax
    if not np.any(important):
        return 0.0
    spreads = (cmax - np.minimum(cmin, 0.0))[important]
    least_spread = float(spreads.min())
    if least_spread <= 0.0:
        return gamma
    ratio = (float(fvals.max()) - float(fvals.min())) / least_spread
    return min(gamma, ratio)


# ---------------------------------------------------------------------------
# Radius and resolution schedules.

def update_radius(delta: float, resolution: float, rho: float,
                  step_norm: float) -> float:
    """New trust-region radius from the step quality ``rho``."""
    if rho <= ETA_FAIL:
        new = 0.5 * delta
    elif rho <= ETA_GOOD:
        new = max(0.5 * delta, step_norm)
    else:
        new = min(math.sqrt(2.0) * delta, max(0.5 * delta, 2.0 * step_norm))
    if new <= THETA_CLAMP * resolution:
        new = resolution
    return new


def reduce_resolution(delta: float, resolution: float,
                      resolution_end: float) -> tuple[float, float] | None:
    """Lower the resolution one notch; ``None`` signals termination.

    Returns the pair (new delta, new resolution). The schedule drops by a
    factor of ten far from the final resolution, by a geometric mean in the
    mid range, and lands exactly on the final resolution from close by.
    """
    if resolution <= resolution_end:
        return None
    ratio = resolution / resolution_end
    if ratio > RATIO_COARSE:
        new_res = 0.1 * resolution
    elif ratio > RATIO_MID:
        new_res = math.sqrt(resolution * resolution_end)
    else:
        new_res = resolution_end
    return max(delta, new_res), new_res


# ---------------------------------------------------------------------------
# Interpolation-set bookkeeping.

def select_removal(state: InterpolationState, x_anchor: np.ndarray,
                   x_plus: np.ndarray, rho: float) -> int:
    """Index of the point to drop for ``x_plus``: maximize the update
    denominator magnitude times the fourth power of the distance from
    ``x_anchor``; the current iterate is protected after failed steps."""
    dists = np.linalg.norm(state.points - x_anchor, axis=1)
    weights = np.empty(state.m)
    for t in range(state.m):
        weights[t] = abs(denominator(state, t, x_plus)) * dists[t] ** 4
    if rho <= 0.0:
        weights[state.current_index] = -np.inf
    return int(np.argmax(weights))


def maybe_swap_models(tr: TrustRegionState, delta_prev: float,
                      resolution_prev: float, rho_prev: float,
                      grad_norm: float, frobenius_grad_norm: float) -> bool:
    """Track iterations where the radius sat on the resolution, the step
    failed badly, and the maintained model gradient dwarfs the minimum-norm
    alternative; after SWAP_STREAK in a row, signal a model rebuild."""
    if (delta_prev == resolution_prev and rho_prev <= ETA_STALL
            and grad_norm >= SWAP_GRAD_RATIO * frobenius_grad_norm):
        tr.swap_count += 1
    else:
        tr.swap_count = 0
    if tr.swap_count >= SWAP_STREAK:
        tr.swap_count = 0
        return True
    return False


def _record_maxcv(rec: EvalRecord) -> float:
    """l-infinity violation of an evaluation record (bounds hold exactly)."""
    return float(max(0.0, np.max(rec.cub, initial=0.0),
                     np.max(np.abs(rec.ceq), initial=0.0)))


def select_best(history: Sequence[EvalRecord],
                gamma: float) -> tuple[EvalRecord, float]:
    """Best visited point: among records whose violation is at most twice the
    least one, minimize the merit, breaking ties by violation, objective, and
    evaluation order. Returns the record and its violation."""
    if not history:
        raise ValueError("no evaluations recorded")
    maxcvs = [_record_maxcv(rec) for rec in history]
    cutoff = 2.0 * min(maxcvs)
    best = None
    best_key = None
    for rec, cv in zip(history, maxcvs):
        if cv > cutoff:
            continue
        key = (merit_actual(rec.f, rec.cub, rec.ceq, gamma), cv, rec.f,
               rec.index)
        if best_key is None or key < best_key:
            best, best_key = (rec, cv), key
    return best


# ---------------------------------------------------------------------------
# Model-side linearization helpers.

def _model_grads(bundle: ModelBundle, state: InterpolationState,
                 x: np.ndarray, lo: int, hi: int) -> np.ndarray:
    models = bundle.c_models[lo:hi]
    if not models:
        return np.zeros((0, x.size))
    return np.array([m.gradient(state, x) for m in models])


def _linearization(bundle: ModelBundle, state: InterpolationState,
                   p: Problem) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                        np.ndarray]:
    """Constraint values and gradient rows at the current iterate: linear rows
    exactly, nonlinear rows through their models (which interpolate the stored
    values there). Returns (cub, ceq, ineq rows, eq rows)."""
    xk = state.point(state.current_index)
    n_ub = p.n_nl_ub or 0
    nl = state.cvals[state.current_index]
    cub = np.concatenate([p.a_ub @ xk - p.b_ub, nl[:n_ub]])
    ceq = np.concatenate([p.a_eq @ xk - p.b_eq, nl[n_ub:]])
    a_ineq = np.vstack([p.a_ub, _model_grads(bundle, state, xk, 0, n_ub)])
    a_eq = np.vstack([p.a_eq,
                      _model_grads(bundle, state, xk, n_ub, len(bundle.c_models))])
    return cub, ceq, a_ineq, a_eq


def _lagrangian_hessian(bundle: ModelBundle, state: InterpolationState,
                        lam: np.ndarray, p: Problem) -> Callable:
    """Hessian-vector product of the model Lagrangian; linear rows and bounds
    contribute nothing."""
    n_ub = p.n_nl_ub or 0
    r0, s0 = p.n_lin_ub, p.n_lin_eq
    lam_ub = lam[r0:r0 + n_ub]
    lam_eq = lam[r0 + n_ub + s0:]

    def hess_vec(v: np.ndarray) -> np.ndarray:
        out = bundle.f_model.hess_vec(state, v)
        for coef, model in zip(lam_ub, bundle.c_models[:n_ub]):
            if coef != 0.0:
                out = out + coef * model.hess_vec(state, v)
        for coef, model in zip(lam_eq, bundle.c_models[n_ub:]):
            if coef != 0.0:
                out = out + coef * model.hess_vec(state, v)
        return out

    return hess_vec


def _multipliers(bundle: ModelBundle, state: InterpolationState,
                 p: Problem) -> np.ndarray:
    """Least-squares multiplier estimate at the current iterate; inequalities
    count as active when their residual is nonnegative."""
    xk = state.point(state.current_index)
    cub, _, a_ineq, a_eq = _linearization(bundle, state, p)
    grad_f = bundle.f_model.gradient(state, xk)
    return lsq_multipliers(grad_f, a_ineq, cub >= 0.0, a_eq)


def _set_merits(state: InterpolationState, p: Problem,
                gamma: float) -> np.ndarray:
    """Merit of every interpolation point from stored values and exact linear
    residuals."""
    pts = state.points
    n_ub = p.n_nl_ub or 0
    cub = np.hstack([pts @ p.a_ub.T - p.b_ub, state.cvals[:, :n_ub]])
    ceq = np.hstack([pts @ p.a_eq.T - p.b_eq, state.cvals[:, n_ub:]])
    viol = np.sqrt(np.sum(np.maximum(cub, 0.0) ** 2, axis=1)
                   + np.sum(ceq ** 2, axis=1))
    return state.fvals + gamma * viol


def _merit_best_index(state: InterpolationState, p: Problem, gamma: float,
                      xk: np.ndarray) -> int:
    """Merit-minimizing set index; ties go to the point nearest the iterate,
    then to the lowest index."""
    merits = _set_merits(state, p, gamma)
    cand = np.flatnonzero(merits == merits.min())
    if cand.size > 1:
        dists = np.linalg.norm(state.points[cand] - xk, axis=1)
        cand = cand[dists == dists.min()]
    return int(cand[0])


# ---------------------------------------------------------------------------
# Trust-region step.

def _relaxed_rhs(cub_vals: np.ndarray, a_ineq: np.ndarray,
                 n_step: np.ndarray) -> np.ndarray:
    """Right-hand sides of the tangential inequality rows: the slack left by
    the normal step, never negative, so the tangential origin stays feasible."""
    return np.maximum(-cub_vals - a_ineq @ n_step, 0.0)


def _tangential_radius(delta: float, n_norm: float) -> float:
    """Radius left for the tangential step once the normal step took
    ``n_norm`` of the shrunken trust region."""
    radius = delta / math.sqrt(2.0)
    return math.sqrt(max(radius * radius - n_norm * n_norm, 0.0))


def trust_region_step(bundle: ModelBundle, state: InterpolationState,
                      lam: np.ndarray, delta: float,
                      p: Problem) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                           np.ndarray]:
    """Composite trial step at the current iterate.

    The normal step reduces the linearized constraint violation within a
    ZETA_NORMAL fraction of the shrunken radius; the tangential step lowers
    the model Lagrangian without giving back the normal step's feasibility
    gain. Returns (normal, tangential, total step, active row matrix), the
    last being the constraint rows pinned by the tangential solve for later
    geometry steps.
    """
    xk = state.point(state.current_index)
    n = xk.size
    cub_vals, ceq_vals, a_ineq, a_eq = _linearization(bundle, state, p)
    sl = p.lower - xk
    su = p.upper - xk
    radius = delta / math.sqrt(2.0)

    f_here = float(state.fvals[state.current_index])
    maxcv_here = max(0.0, np.max(cub_vals, initial=0.0),
                     np.max(np.abs(ceq_vals), initial=0.0))
    no_rows = a_ineq.shape[0] == 0 and a_eq.shape[0] == 0
    if no_rows or maxcv_here <= FEASIBILITY_RTOL * (1.0 + abs(f_here)):
        n_step = np.zeros(n)
    else:
        n_step = normal_subproblem(a_ineq, -cub_vals, a_eq, -ceq_vals,
                                   sl, su, ZETA_NORMAL * radius)

    hess_vec = _lagrangian_hessian(bundle, state, lam, p)
    grad_t = bundle.f_model.gradient(state, xk) + hess_vec(n_step)
    # Without constraint rows there is no composite overshoot to guard
    # against, so the step keeps the whole trust region.
    t_radius = delta if no_rows \
        else _tangential_radius(delta, float(np.linalg.norm(n_step)))
    tl = np.minimum(sl - n_step, 0.0)
    tu = np.maximum(su - n_step, 0.0)
    q = QuadObjective(grad_t, hess_vec)

    if no_rows:
        out = tcg_bound(q, tl, tu, t_radius)
        t_step = out.step
        if t_radius > 0.0 and np.linalg.norm(t_step) >= 0.99 * t_radius:
            t_step = boundary_refine(q, t_step, tl, tu, t_radius,
                                     out.working_set)
        at_bound = (t_step <= tl) | (t_step >= tu)
        act_idx = np.union1d(out.working_set, np.flatnonzero(at_bound))
        act_rows = np.eye(n)[act_idx.astype(int)]
    else:
        fin_u = np.flatnonzero(np.isfinite(tu))
        fin_l = np.flatnonzero(np.isfinite(tl))
        eye = np.eye(n)
        a_all = np.vstack([a_ineq, eye[fin_u], -eye[fin_l]])
        rhs = np.concatenate([_relaxed_rhs(cub_vals, a_ineq, n_step),
                              tu[fin_u], -tl[fin_l]])
        out = tcg_linear(q, a_all, rhs, a_eq, t_radius)
        t_step = out.step
        act_rows = np.vstack([a_eq, a_all[out.working_set]])

    return n_step, t_step, n_step + t_step, act_rows


# ---------------------------------------------------------------------------
# Main loop.

def _clip_value(v: float) -> float:
    return float(min(max(v, -BARRIER), BARRIER))


def _resolve_options(opts: Options, n: int) -> tuple[int, int, int]:
    npt = opts.npt if opts.npt is not None else 2 * n + 1
    maxfev = opts.maxfev if opts.maxfev is not None else 500 * n
    maxiter = opts.maxiter if opts.maxiter is not None else 1000 * n
    if not n + 2 <= npt <= (n + 1) * (n + 2) // 2:
        raise ConfigurationError(
            f"npt = {npt} outside [n + 2, (n + 1)(n + 2)/2] for n = {n}")
    if maxfev < 1:
        raise ConfigurationError("maxfev must be at least 1")
    if maxiter < 0:
        raise ConfigurationError("maxiter must be nonnegative")
    return npt, maxfev, maxiter


def minimize(p: Problem, x0, opts: Options | None = None) -> SolveResult:
    """Solve the problem from ``x0``; see :class:`Options` for knobs.

    Every point sent to the objective and constraint callbacks satisfies the
    bounds exactly. The returned point is the best visited one: feasibility
    first (within twice the least violation seen), then the penalized merit.
    """
    opts = Options() if opts is None else opts
    n_full = p.n
    if not 0.0 < opts.rhoend <= opts.rhobeg:
        raise ConfigurationError("need 0 < rhoend <= rhobeg")
    if opts.model_policy not in ("broyden", "min_frobenius"):
        raise ConfigurationError("model_policy must be 'broyden' or "
                                 "'min_frobenius'")

    try:
        p_red, report = preprocess(p, x0, opts.rhobeg)
    except InfeasibleBoundsError as exc:
        return SolveResult(
            x=np.asarray(x0, dtype=float), status="infeasible-bounds",
            message=f"{_MESSAGES['infeasible-bounds']}: {exc}", fun=math.nan,
            jac=np.full(n_full, math.nan), nfev=0, nit=0, maxcv=math.nan)

    free_idx = np.setdiff1d(np.arange(n_full), report.fixed_indices)
    n = report.reduced_n

    if n == 0:
        rec = p_red.evaluate(np.empty(0))
        return SolveResult(
            x=report.inflate(rec.x), status="all-fixed",
            message=_MESSAGES["all-fixed"], fun=rec.f,
            jac=np.full(n_full, math.nan), nfev=p_red.nfev, nit=0,
            maxcv=_record_maxcv(rec))

    npt, maxfev, maxiter = _resolve_options(opts, n)
    rhobeg = report.adjusted_delta0
    rhoend = min(opts.rhoend, rhobeg)
    lo, hi = p_red.lower, p_red.upper

    tr = TrustRegionState(delta=rhobeg, resolution=rhobeg)
    state = initial_interpolation_set(report.adjusted_x0, rhobeg, npt, lo, hi)
    bundle: ModelBundle | None = None
    nit = 0
    status = "maxiter"

    def checked_eval(x: np.ndarray) -> EvalRecord:
        if p_red.nfev >= maxfev:
            raise _Terminate("maxfev")
        rec = p_red.evaluate(np.minimum(np.maximum(x, lo), hi))
        if rec.f <= opts.target and _record_maxcv(rec) <= TARGET_FEAS_TOL:
            raise _Terminate("target-reached")
        return rec

    def store(i: int, rec: EvalRecord) -> None:
        state.fvals[i] = _clip_value(rec.f)
        if state.cvals.shape[1]:
            nl = np.concatenate([rec.cub[p_red.n_lin_ub:],
                                 rec.ceq[p_red.n_lin_eq:]])
            state.cvals[i] = np.clip(nl, -BARRIER, BARRIER)

    def reduce(log_best: bool = True) -> bool:
        """One resolution notch plus the penalty trim; False to terminate."""
        out = reduce_resolution(tr.delta, tr.resolution, rhoend)
        if out is None:
            return False
        tr.delta, tr.resolution = out
        n_ub = p_red.n_nl_ub or 0
        pts = state.points
        ineq_vals = np.hstack([pts @ p_red.a_ub.T - p_red.b_ub,
                               state.cvals[:, :n_ub]])
        eq_vals = np.hstack([pts @ p_red.a_eq.T - p_red.b_eq,
                             state.cvals[:, n_ub:]])
        tr.gamma = penalty_reduce(state.fvals, ineq_vals, eq_vals, tr.gamma)
        if opts.disp and log_best:
            print(f"resolution lowered to {tr.resolution:.1e}; "
                  f"best objective so far {float(state.fvals.min()):.6e}")
        return True

    def run_geometry(act_rows: np.ndarray) -> None:
        """Replace the farthest point by a model-improving one."""
        x = state.point(state.current_index)
        dists = np.linalg.norm(state.points - x, axis=1)
        far = int(np.argmax(dists))
        bar_delta = max(tr.delta / 10.0, tr.resolution)
        lag = lagrange_polynomial(state, far)
        r_b = geometry_bobyqa(lag, lo, hi, bar_delta, state)
        r_l = geometry_lincoa(lag, act_rows, bar_delta, lo, hi, state)
        x_b = np.minimum(np.maximum(x + r_b, lo), hi)
        x_l = np.minimum(np.maximum(x + r_l, lo), hi)
        sig_b = denominator(state, far, x_b)
        sig_l = denominator(state, far, x_l)
        if sig_b == 0.0 and sig_l == 0.0:
            raise _Terminate("rounding-stop")
        cub_vals, ceq_vals, a_ineq, a_eq = _linearization(bundle, state, p_red)
        step_l = x_l - x
        ineq_ok = np.all(cub_vals + a_ineq @ step_l
                         <= GEOMETRY_FEAS_TOL
                         * (1.0 + np.linalg.norm(a_ineq, axis=1) * bar_delta))
        eq_ok = np.all(np.abs(ceq_vals + a_eq @ step_l)
                       <= GEOMETRY_FEAS_TOL
                       * (1.0 + np.linalg.norm(a_eq, axis=1) * bar_delta))
        use_l = (ineq_ok and eq_ok
                 and abs(sig_l) >= GEOMETRY_SIGMA_RATIO * abs(sig_b))
        x_new = x_l if use_l else x_b
        rec = checked_eval(x_new)
        old = state.current_index
        nl = np.concatenate([rec.cub[p_red.n_lin_ub:],
                             rec.ceq[p_red.n_lin_eq:]])
        replace_point(state, far, rec.x, _clip_value(rec.f),
                      np.clip(nl, -BARRIER, BARRIER), bundle)
        merits = _set_merits(state, p_red, tr.gamma)
        cand = np.flatnonzero(merits == merits.min())
        if far != old and merits[old] == merits.min():
            state.current_index = old
        else:
            state.current_index = int(cand[0])

    try:
        for i in range(npt):
            rec = checked_eval(state.points[i])
            state.rel[i] = rec.x - state.base
            if i == 0 and (p_red.n_nl_ub or 0) + (p_red.n_nl_eq or 0) > 0:
                state.cvals = np.full(
                    (npt, p_red.n_nl_ub + p_red.n_nl_eq), np.nan)
            store(i, rec)
        factorize(state)
        state.current_index = int(np.argmin(state.fvals))
        bundle = ModelBundle(
            f_model=solve_broyden(state, state.fvals),
            c_models=[solve_broyden(state, state.cvals[:, j])
                      for j in range(state.cvals.shape[1])])
        tr.lam = _multipliers(bundle, state, p_red)

        prev_delta = prev_resolution = math.nan
        prev_rho = math.inf
        for nit in range(1, maxiter + 1):
            xk = state.point(state.current_index)
            if np.linalg.norm(state.rel[state.current_index]) \
                    > BASE_SHIFT_FACTOR * tr.delta:
                shift_base(state, bundle.all_models(), xk)

            frob = solve_broyden(state, state.fvals)
            grad_norm = float(np.linalg.norm(
                bundle.f_model.gradient(state, xk)))
            frob_norm = float(np.linalg.norm(frob.gradient(state, xk)))
            if opts.model_policy == "min_frobenius" or maybe_swap_models(
                    tr, prev_delta, prev_resolution, prev_rho,
                    grad_norm, frob_norm):
                bundle = ModelBundle(
                    f_model=frob,
                    c_models=[solve_broyden(state, state.cvals[:, j])
                              for j in range(state.cvals.shape[1])])

            delta_used, res_used = tr.delta, tr.resolution
            n_step, t_step, d, act_rows = trust_region_step(
                bundle, state, tr.lam, tr.delta, p_red)
            d_norm = float(np.linalg.norm(d))

            if d_norm < 0.5 * tr.delta:
                # Short-step branch: no evaluation, just shrink and tidy up.
                tr.short_half_count += 1
                tr.short_tenth_count = (tr.short_tenth_count + 1
                                        if d_norm < 0.1 * tr.delta else 0)
                tr.delta *= 0.5
                if tr.delta <= THETA_CLAMP * tr.resolution:
                    tr.delta = tr.resolution
                if (tr.short_half_count >= SHORT_HALF_LIMIT
                        or tr.short_tenth_count >= SHORT_TENTH_LIMIT):
                    tr.short_half_count = tr.short_tenth_count = 0
                    if not reduce():
                        status = "radius-target"
                        break
                elif float(np.max(np.linalg.norm(
                        state.points - state.point(state.current_index),
                        axis=1))) >= tr.delta:
                    run_geometry(act_rows)
                prev_delta, prev_resolution = delta_used, res_used
                prev_rho = math.inf
                continue

            tr.short_half_count = tr.short_tenth_count = 0
            cub_vals, ceq_vals, a_ineq, a_eq = _linearization(
                bundle, state, p_red)
            hess_vec = _lagrangian_hessian(bundle, state, tr.lam, p_red)
            grad_f = bundle.f_model.gradient(state, xk)
            qp_value = float(grad_f @ d + 0.5 * d @ hess_vec(d))
            phi_zero = violation_norm(cub_vals, ceq_vals)
            phi_step = violation_norm(cub_vals + a_ineq @ d,
                                      ceq_vals + a_eq @ d)
            tr.gamma = penalty_increase(tr.gamma, tr.lam, qp_value,
                                        phi_zero, phi_step)

            merit_k = merit_actual(
                float(state.fvals[state.current_index]),
                cub_vals, ceq_vals, tr.gamma)
            rec = checked_eval(xk + d)
            nl = np.concatenate([rec.cub[p_red.n_lin_ub:],
                                 rec.ceq[p_red.n_lin_eq:]])
            merit_plus = merit_actual(_clip_value(rec.f), rec.cub, rec.ceq,
                                      tr.gamma)
            model_drop = merit_model(0.0, phi_zero, tr.gamma) \
                - merit_model(qp_value, phi_step, tr.gamma)
            rho = -math.inf if model_drop <= 0.0 \
                else (merit_k - merit_plus) / model_drop

            anchor = state.point(
                _merit_best_index(state, p_red, tr.gamma, xk))
            removal = select_removal(state, anchor, rec.x, rho)
            old_idx = state.current_index
            replace_point(state, removal, rec.x, _clip_value(rec.f),
                          np.clip(nl, -BARRIER, BARRIER), bundle)

            merits = _set_merits(state, p_red, tr.gamma)
            if removal != old_idx and merits[old_idx] == merits.min():
                state.current_index = old_idx
            else:
                state.current_index = int(np.argmin(merits))
            tr.lam = _multipliers(bundle, state, p_red)
            tr.delta = update_radius(delta_used, tr.resolution, rho, d_norm)

            max_dist = float(np.max(np.linalg.norm(
                state.points - state.point(state.current_index), axis=1)))
            if (delta_used == res_used and rho <= ETA_FAIL
                    and max_dist <= 2.0 * res_used):
                if not reduce():
                    status = "radius-target"
                    break
            elif rho <= ETA_FAIL and max_dist > max(tr.delta,
                                                    2.0 * tr.resolution):
                run_geometry(act_rows)

            prev_delta, prev_resolution, prev_rho = delta_used, res_used, rho
            if opts.debug:
                assert tr.delta >= tr.resolution > 0.0
                assert state.rel.shape[0] == npt
                assert 0 <= state.current_index < npt
    except _Terminate as sig:
        status = sig.status
    except (DenominatorZeroError, GeometryDegenerateError):
        status = "rounding-stop"

    rec, cv = select_best(p_red.history, tr.gamma)
    jac = np.full(n_full, math.nan)
    if bundle is not None:
        jac[free_idx] = bundle.f_model.gradient(state, rec.x)
    result = SolveResult(
        x=report.inflate(rec.x), status=status, message=_MESSAGES[status],
        fun=rec.f, jac=jac, nfev=p_red.nfev, nit=nit, maxcv=cv)
    if opts.disp:
        print(f"{result.message} (status: {result.status})")
        print(f"objective {result.fun:.6e}, violation {result.maxcv:.3e}, "
              f"{result.nfev} evaluations, {result.nit} iterations")
    return result
