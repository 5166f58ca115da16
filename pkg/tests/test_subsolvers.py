"""Tests for the trust-region subproblem solvers.

Oracles:
- exact trust-region minimizer via eigendecomposition plus a secular-equation
  root find (used to check the half-optimality guarantee of truncated CG);
- exhaustive active-set enumeration for the nonnegative least squares;
- dense grid sampling for the geometry steps.
"""

import math

import numpy as np
import pytest
import scipy.optimize

from dfosqp.models import lagrange_polynomial
from dfosqp.subsolvers import (
    QuadObjective,
    boundary_refine,
    geometry_bobyqa,
    geometry_lincoa,
    lsq_multipliers,
    nnls,
    normal_subproblem,
    project_polar,
    tcg,
    tcg_bound,
    tcg_linear,
)
from test_models import random_state


def quad(h_mat: np.ndarray, grad: np.ndarray) -> QuadObjective:
    h_mat = np.asarray(h_mat, dtype=float)
    return QuadObjective(np.asarray(grad, dtype=float), lambda v: h_mat @ v)


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a_mat = rng.normal(size=(n, n))
    return a_mat @ a_mat.T + 0.1 * np.eye(n)


def random_sym(rng: np.random.Generator, n: int) -> np.ndarray:
    a_mat = rng.normal(size=(n, n))
    return 0.5 * (a_mat + a_mat.T)


def exact_tr_reduction(grad: np.ndarray, h_mat: np.ndarray,
                       delta: float) -> float:
    """Exact trust-region optimum via eigendecomposition and the secular
    equation (generic case; random data avoids the hard case)."""
    w, v = np.linalg.eigh(h_mat)
    gt = v.T @ grad

    def snorm(lam: float) -> float:
        return float(np.linalg.norm(gt / (w + lam)))

    if w[0] > 0.0 and snorm(0.0) <= delta:
        coeff = -gt / w
    else:
        lo = max(0.0, -w[0]) + 1e-12
        if snorm(lo) <= delta:
            coeff = -gt / (w + lo)
        else:
            hi = lo + 1.0
            while snorm(hi) >= delta:
                hi *= 2.0
            lam = scipy.optimize.brentq(lambda t: snorm(t) - delta, lo, hi,
                                        xtol=1e-15, maxiter=300)
            coeff = -gt / (w + lam)
    s = v @ coeff
    return -(float(grad @ s) + 0.5 * float(s @ h_mat @ s))


def quad_value(q: QuadObjective, s: np.ndarray) -> float:
    return q.value(s)


def first_boundary_delta(grad: np.ndarray, h_mat: np.ndarray) -> float:
    """A radius guaranteeing the very first TCG step hits the boundary."""
    curb = float(grad @ h_mat @ grad)
    norm_g = float(np.linalg.norm(grad))
    if curb <= 0.0:
        return norm_g
    return 0.9 * norm_g ** 3 / curb


class TestTcg:
    def test_interior_newton_point(self):
        rng = np.random.default_rng(7)
        for n in (2, 4, 6):
            g = rng.normal(size=n)
            q = quad(np.eye(n), -g)  # Q(s) = 0.5||s||^2 - g.s
            out = tcg(q, 10.0 + float(np.linalg.norm(g)))
            assert out.status == "converged"
            np.testing.assert_allclose(out.step, g, atol=1e-12)

    def test_zero_gradient(self):
        q = quad(np.eye(3), np.zeros(3))
        out = tcg(q, 1.0)
        np.testing.assert_array_equal(out.step, np.zeros(3))
        assert out.status == "converged"
        assert out.reduction == 0.0

    def test_linear_model_boundary(self):
        rng = np.random.default_rng(3)
        g = rng.normal(size=4)
        q = quad(np.zeros((4, 4)), -g)
        out = tcg(q, 2.5)
        assert out.status == "boundary"
        np.testing.assert_allclose(out.step, 2.5 * g / np.linalg.norm(g),
                                   atol=1e-12)

    def test_half_optimality_spd(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            h_mat = random_spd(rng, n)
            g = rng.normal(size=n)
            delta = float(rng.uniform(0.1, 2.0))
            q = quad(h_mat, g)
            out = tcg(q, delta)
            exact = exact_tr_reduction(g, h_mat, delta)
            assert out.reduction >= 0.5 * exact - 1e-10

    def test_monotone_feasible_iterates(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            h_mat = random_sym(rng, n)
            g = rng.normal(size=n)
            delta = float(rng.uniform(0.2, 3.0))
            q = quad(h_mat, g)
            out = tcg(q, delta)
            scale = max(1.0, float(np.linalg.norm(g)) * delta)
            prev = 0.0
            for s in out.history:
                assert np.linalg.norm(s) <= delta * (1 + 1e-12)
                val = quad_value(q, s)
                assert val <= prev + 1e-12 * scale
                prev = val
            assert out.reduction >= 0.0
            assert abs(out.reduction - max(-quad_value(q, out.step), 0.0)) \
                <= 1e-12 * scale
            assert len(out.history) <= n

    def test_stop_equivalence(self):
        rng = np.random.default_rng(5)
        for c in (0.5, 1.0, 2.0):
            for n in (2, 5):
                g = rng.normal(size=n)
                q = quad(c * np.eye(n), g)
                out = tcg(q, 1e6)
                assert out.status == "converged"
                assert out.stopped_at_top
                assert np.linalg.norm(out.final_p) <= 1e-10 * np.linalg.norm(g)


class TestTcgBound:
    def test_upper_bound_hit_1d(self):
        q = quad(np.zeros((1, 1)), np.array([-1.0]))
        out = tcg_bound(q, np.array([-np.inf]), np.array([0.5]), 1.0)
        assert out.step[0] == 0.5
        assert list(out.working_set) == [0]
        assert out.status == "converged"

    def test_zero_lower_bound_never_moves(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = 4
            g = rng.normal(size=n)
            g[1] = abs(g[1])  # uphill coordinate sitting on its zero bound
            l = -np.ones(n)
            l[1] = 0.0
            q = quad(random_spd(rng, n), g)
            out = tcg_bound(q, l, np.ones(n), 2.0)
            assert out.step[1] == 0.0
            assert 1 in out.working_set
            for s in out.history:
                assert s[1] == 0.0

    def test_matches_tcg_without_bounds(self):
        rng = np.random.default_rng(17)
        big = np.full(5, np.inf)
        for _ in range(40):
            h_mat = random_spd(rng, 5)
            g = rng.normal(size=5)
            delta = first_boundary_delta(g, h_mat)
            q = quad(h_mat, g)
            plain = tcg(q, delta)
            bounded = tcg_bound(q, -big, big, delta)
            np.testing.assert_allclose(bounded.step, plain.step, atol=1e-10)

    def test_feasible_monotone_and_exact_bounds(self):
        rng = np.random.default_rng(29)
        for _ in range(150):
            n = int(rng.integers(2, 6))
            l = -rng.uniform(0.1, 1.0, n)
            u = rng.uniform(0.1, 1.0, n)
            for i in range(n):
                draw = rng.uniform()
                if draw < 0.15:
                    l[i] = 0.0
                elif draw < 0.3:
                    u[i] = 0.0
            h_mat = random_sym(rng, n)
            g = rng.normal(size=n)
            delta = float(rng.uniform(0.2, 2.0))
            q = quad(h_mat, g)
            out = tcg_bound(q, l, u, delta)
            scale = max(1.0, float(np.linalg.norm(g)) * delta)
            prev = 0.0
            for s in out.history:
                assert np.all(s >= l) and np.all(s <= u)
                assert np.linalg.norm(s) <= delta * (1 + 1e-12)
                val = quad_value(q, s)
                assert val <= prev + 1e-10 * scale
                prev = val
            for i in out.working_set:
                assert out.step[i] == l[i] or out.step[i] == u[i]
            assert out.reduction >= 0.0


class TestBoundaryRefine:
    def test_projected_gradient_parallel_no_change(self):
        # gradient parallel to the step: the search plane degenerates.
        s_star = np.array([2.0, 0.0])
        q = quad(np.zeros((2, 2)), np.array([-1.0, 0.0]))
        refined = boundary_refine(q, s_star, -np.full(2, 1e9),
                                  np.full(2, 1e9), 2.0, [])
        np.testing.assert_array_equal(refined, s_star)

    def test_linear_objective_arc_minimum(self):
        delta = 2.0
        q = quad(np.zeros((2, 2)), np.array([-1.0, -1.0]))
        s_star = np.array([delta, 0.0])
        refined = boundary_refine(q, s_star, -np.full(2, 1e9),
                                  np.full(2, 1e9), delta, [])
        np.testing.assert_allclose(refined, delta / math.sqrt(2.0)
                                   * np.ones(2), atol=2e-3)
        assert q.value(refined) < q.value(s_star)
        assert abs(np.linalg.norm(refined) - delta) <= 1e-10 * delta

    def test_never_increases_and_preserves_norm(self):
        rng = np.random.default_rng(31)
        checked = 0
        for _ in range(200):
            n = int(rng.integers(2, 6))
            l = -rng.uniform(0.3, 2.0, n)
            u = rng.uniform(0.3, 2.0, n)
            h_mat = random_sym(rng, n)
            g = rng.normal(size=n)
            delta = float(rng.uniform(0.2, 1.0))
            q = quad(h_mat, g)
            out = tcg_bound(q, l, u, delta)
            if abs(np.linalg.norm(out.step) - delta) > 1e-10 * delta:
                continue
            refined = boundary_refine(q, out.step, l, u, delta,
                                      out.working_set)
            assert q.value(refined) <= q.value(out.step) + 1e-12
            assert abs(np.linalg.norm(refined) - delta) <= 1e-9 * delta
            assert np.all(refined >= l) and np.all(refined <= u)
            checked += 1
        assert checked >= 30


class TestProjectPolar:
    def test_no_constraints_identity(self):
        g = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(
            project_polar(g, np.zeros((0, 3)), np.zeros((0, 3))), g)

    def test_inside_cone_identity(self):
        g = np.array([-1.0, 0.0])
        a = np.array([[1.0, 0.2]])
        np.testing.assert_allclose(project_polar(g, a, np.zeros((0, 2))), g,
                                   atol=1e-12)

    def test_halfspace_formula(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            g = rng.normal(size=n)
            a = rng.normal(size=n)
            if float(a @ g) <= 0.0:
                a = -a
            expected = g - (float(a @ g) / float(a @ a)) * a
            got = project_polar(g, a.reshape(1, -1), np.zeros((0, n)))
            np.testing.assert_allclose(got, expected, atol=1e-10)

    def test_projection_lemma(self):
        # The result equals the orthogonal projection of g onto the
        # complement of the rows it annihilates plus the equality rows.
        rng = np.random.default_rng(37)
        for _ in range(60):
            n = int(rng.integers(2, 7))
            k = int(rng.integers(1, 4))
            rows = rng.normal(size=(k, n))
            c_mat = rng.normal(size=(rng.integers(0, 2), n))
            g = rng.normal(size=n)
            p = project_polar(g, rows, c_mat)
            scale = max(1.0, float(np.linalg.norm(g)))
            assert np.all(rows @ p <= 1e-9 * scale
                          * np.linalg.norm(rows, axis=1))
            if c_mat.shape[0]:
                assert np.linalg.norm(c_mat @ p) <= 1e-9 * scale \
                    * np.linalg.norm(c_mat)
            active = [j for j in range(k)
                      if abs(float(rows[j] @ p))
                      <= 1e-8 * np.linalg.norm(rows[j]) * scale]
            span = np.vstack([rows[active], c_mat]) if active or \
                c_mat.shape[0] else np.zeros((0, n))
            resid = g - p
            if span.shape[0]:
                coef = np.linalg.lstsq(span.T, resid, rcond=None)[0]
                assert np.linalg.norm(span.T @ coef - resid) <= 1e-8 * scale
                assert np.linalg.norm(span @ p) <= 1e-8 * scale \
                    * max(1.0, np.linalg.norm(span))
            else:
                assert np.linalg.norm(resid) <= 1e-9 * scale


class TestTcgLinear:
    def test_matches_tcg_without_rows(self):
        rng = np.random.default_rng(41)
        for _ in range(40):
            n = 4
            h_mat = random_spd(rng, n)
            g = rng.normal(size=n)
            delta = first_boundary_delta(g, h_mat)
            q = quad(h_mat, g)
            plain = tcg(q, delta)
            lin = tcg_linear(q, np.zeros((0, n)), np.zeros(0),
                             np.zeros((0, n)), delta)
            np.testing.assert_allclose(lin.step, plain.step, atol=1e-10)

    def test_equality_null_space_direction(self):
        rng = np.random.default_rng(43)
        n = 4
        g = rng.normal(size=n)
        c = rng.normal(size=n)
        c -= (c @ g) / (g @ g) * g  # orthogonal to g
        q = quad(np.zeros((n, n)), -g)
        delta = 3.0
        out = tcg_linear(q, np.zeros((0, n)), np.zeros(0),
                         c.reshape(1, -1), delta)
        assert out.status == "boundary"
        np.testing.assert_allclose(out.step, delta * g / np.linalg.norm(g),
                                   atol=1e-10)

    def test_near_active_row_pins_coordinate(self):
        q = quad(np.eye(2), np.array([-1.0, -0.3]))
        a_mat = np.array([[1.0, 0.0]])
        out = tcg_linear(q, a_mat, np.array([0.3]), np.zeros((0, 2)), 2.0)
        assert abs(out.step[0]) <= 1e-14
        np.testing.assert_allclose(out.step, [0.0, 0.3], atol=1e-10)
        assert 0 in out.working_set

    def test_precondition_negative_b(self):
        q = quad(np.eye(1), np.array([1.0]))
        with pytest.raises(ValueError):
            tcg_linear(q, np.array([[1.0]]), np.array([-0.1]),
                       np.zeros((0, 1)), 1.0)

    def test_feasible_monotone_iterates(self):
        rng = np.random.default_rng(47)
        for _ in range(150):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(1, 5))
            a_mat = rng.normal(size=(k, n))
            b = rng.uniform(0.0, 1.0, k)
            n_eq = int(rng.integers(0, 2))
            c_mat = rng.normal(size=(n_eq, n))
            h_mat = random_sym(rng, n)
            g = rng.normal(size=n)
            delta = float(rng.uniform(0.3, 2.0))
            q = quad(h_mat, g)
            out = tcg_linear(q, a_mat, b, c_mat, delta)
            scale = max(1.0, float(np.linalg.norm(g)) * delta)
            prev = 0.0
            for s in out.history:
                assert np.all(a_mat @ s <= b + 1e-9 * scale)
                if n_eq:
                    assert np.linalg.norm(c_mat @ s) <= 1e-8 * scale \
                        * np.linalg.norm(c_mat)
                assert np.linalg.norm(s) <= delta * (1 + 1e-10)
                val = quad_value(q, s)
                assert val <= prev + 1e-10 * scale
                prev = val
            assert out.reduction >= 0.0


class TestNormalSubproblem:
    def test_origin_already_optimal(self):
        rng = np.random.default_rng(53)
        n = 3
        a_ineq = rng.normal(size=(4, n))
        b_ineq = rng.uniform(0.1, 1.0, 4)
        z = normal_subproblem(a_ineq, b_ineq, np.zeros((0, n)), np.zeros(0),
                              -np.ones(n), np.ones(n), 1.0)
        np.testing.assert_allclose(z, np.zeros(n), atol=1e-12)

    def test_truncated_newton_univariate(self):
        z = normal_subproblem(np.zeros((0, 1)), np.zeros(0),
                              np.array([[1.0]]), np.array([1.0]),
                              np.array([-np.inf]), np.array([np.inf]), 0.5)
        np.testing.assert_allclose(z, [0.5], atol=1e-12)

    def test_violated_inequality_univariate(self):
        z = normal_subproblem(np.array([[1.0]]), np.array([-1.0]),
                              np.zeros((0, 1)), np.zeros(0),
                              np.array([-np.inf]), np.array([np.inf]), 2.0)
        np.testing.assert_allclose(z, [-1.0], atol=1e-8)

    def test_never_worse_than_origin_and_feasible(self):
        rng = np.random.default_rng(59)

        def violation(a_ineq, b_ineq, a_eq, b_eq, z):
            tot = 0.0
            if a_ineq.size:
                tot += float(np.sum(np.maximum(a_ineq @ z - b_ineq, 0.0) ** 2))
            if a_eq.size:
                tot += float(np.sum((a_eq @ z - b_eq) ** 2))
            return tot

        for _ in range(150):
            n = int(rng.integers(1, 6))
            m1 = int(rng.integers(0, 4))
            m2 = int(rng.integers(0, 3))
            a_ineq = rng.normal(size=(m1, n))
            b_ineq = rng.normal(size=m1)
            a_eq = rng.normal(size=(m2, n))
            b_eq = rng.normal(size=m2)
            l = -rng.uniform(0.05, 2.0, n)
            u = rng.uniform(0.05, 2.0, n)
            delta = float(rng.uniform(0.1, 1.5))
            z = normal_subproblem(a_ineq, b_ineq, a_eq, b_eq, l, u, delta)
            assert np.all(z >= l) and np.all(z <= u)
            assert np.linalg.norm(z) <= delta * (1 + 1e-12)
            assert violation(a_ineq, b_ineq, a_eq, b_eq, z) \
                <= violation(a_ineq, b_ineq, a_eq, b_eq, np.zeros(n)) + 1e-10


def exhaustive_nnls_value(a_mat: np.ndarray, b: np.ndarray, n0: int) -> float:
    """Brute-force optimum of min 0.5||As-b||^2 with s[:n0] >= 0."""
    m, n = a_mat.shape
    best = math.inf
    for mask in range(1 << n0):
        zero = [i for i in range(n0) if mask >> i & 1]
        cols = a_mat.copy()
        cols[:, zero] = 0.0
        s = np.linalg.lstsq(cols, b, rcond=None)[0]
        s[zero] = 0.0
        if np.any(s[:n0] < -1e-9):
            continue
        best = min(best, 0.5 * float(np.linalg.norm(a_mat @ s - b) ** 2))
    return best


class TestNnls:
    def test_identity_feasible(self):
        b = np.array([0.3, 1.2, 0.0])
        np.testing.assert_allclose(nnls(np.eye(3), b, 3), b, atol=1e-12)

    def test_identity_clipped(self):
        s = nnls(np.eye(2), np.array([1.0, -1.0]), 2)
        np.testing.assert_allclose(s, [1.0, 0.0], atol=1e-12)

    def test_unconstrained_least_squares(self):
        rng = np.random.default_rng(61)
        a_mat = rng.normal(size=(6, 3))
        b = rng.normal(size=6)
        expected = np.linalg.lstsq(a_mat, b, rcond=None)[0]
        np.testing.assert_allclose(nnls(a_mat, b, 0), expected, atol=1e-10)

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(67)
        for _ in range(120):
            m = int(rng.integers(2, 9))
            n = int(rng.integers(1, 7))
            n0 = int(rng.integers(0, n + 1))
            a_mat = rng.normal(size=(m, n))
            b = rng.normal(size=m)
            s = nnls(a_mat, b, n0)
            assert np.all(s[:n0] >= 0.0)
            val = 0.5 * float(np.linalg.norm(a_mat @ s - b) ** 2)
            assert val <= exhaustive_nnls_value(a_mat, b, n0) + 1e-10

    def test_rank_deficient(self):
        a_mat = np.array([[1.0, 1.0], [1.0, 1.0]])
        b = np.array([1.0, 1.0])
        s = nnls(a_mat, b, 2)
        assert np.all(s >= 0.0)
        assert abs(float(np.linalg.norm(a_mat @ s - b))) <= 1e-10


class TestLsqMultipliers:
    def test_no_constraints(self):
        lam = lsq_multipliers(np.array([1.0, 2.0]), np.zeros((0, 2)),
                              np.zeros(0, dtype=bool), np.zeros((0, 2)))
        assert lam.size == 0

    def test_single_equality(self):
        g = np.array([0.4, -1.1, 2.0])
        lam = lsq_multipliers(g, np.zeros((0, 3)), np.zeros(0, dtype=bool),
                              (-g).reshape(1, -1))
        np.testing.assert_allclose(lam, [1.0], atol=1e-10)

    def test_inactive_inequality_zeroed(self):
        rng = np.random.default_rng(71)
        g = rng.normal(size=4)
        grads = rng.normal(size=(1, 4))
        lam = lsq_multipliers(g, grads, np.array([False]), np.zeros((0, 4)))
        np.testing.assert_array_equal(lam, [0.0])

    def test_mixed_optimality(self):
        # optimal multipliers reproduce -grad_f exactly when possible
        rng = np.random.default_rng(73)
        for _ in range(20):
            n = 5
            eq = rng.normal(size=(1, n))
            ineq = rng.normal(size=(3, n))
            active = np.array([True, True, False])
            lam_true = np.array([0.7, 0.0, 0.0, -1.3])
            g = -(lam_true[:3] @ ineq + lam_true[3:] @ eq)
            lam = lsq_multipliers(g, ineq, active, eq)
            resid = g + lam[:3] @ ineq + lam[3:] @ eq
            assert np.linalg.norm(resid) <= 1e-8
            assert np.all(lam[:3] >= 0.0)
            assert lam[1] == 0.0 or lam[1] >= 0.0
            assert lam[2] == 0.0


def ball_box_samples(rng, center, l, u, delta, count):
    n = center.size
    dirs = rng.normal(size=(count, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = delta * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    pts = center + dirs * radii[:, None]
    keep = np.all((pts >= l) & (pts <= u), axis=1)
    return pts[keep]


class TestGeometry:
    def _state(self, rng, n, m):
        state = random_state(rng, n, m)
        state.current_index = 0
        return state

    def test_linear_lagrange_no_bounds(self):
        rng = np.random.default_rng(79)
        state = self._state(rng, 3, 6)
        xk = state.point(0)
        lag = lagrange_polynomial(state, 2)
        # strip curvature: keep only a linear part, with L(xk) = 0
        lag.implicit[:] = 0.0
        lag.hess_explicit[:] = 0.0
        lag.grad = rng.normal(size=3)
        lag.intercept = -float(lag.grad @ (xk - state.base))
        delta = 0.7
        big = np.full(3, 1e9)
        r = geometry_bobyqa(lag, -big, big, delta, state)
        val = lag.value(state, xk + r)
        assert abs(abs(val) - delta * np.linalg.norm(lag.grad)) <= 1e-10
        assert abs(np.linalg.norm(r) - delta) <= 1e-10

    def test_degenerate_zero_model(self):
        rng = np.random.default_rng(83)
        state = self._state(rng, 2, 5)
        lag = lagrange_polynomial(state, 1)
        lag.implicit[:] = 0.0
        lag.hess_explicit[:] = 0.0
        lag.grad[:] = 0.0
        lag.intercept = 1.0
        r = geometry_bobyqa(lag, -np.ones(2), np.ones(2), 0.5, state)
        np.testing.assert_array_equal(r, np.zeros(2))

    def test_grid_oracle_half_max(self):
        rng = np.random.default_rng(89)
        for trial in range(12):
            state = self._state(rng, 2, int(rng.integers(4, 7)))
            xk = state.point(0)
            l = xk - rng.uniform(0.2, 2.0, 2)
            u = xk + rng.uniform(0.2, 2.0, 2)
            delta = float(rng.uniform(0.3, 1.0))
            idx = int(rng.integers(0, state.m))
            lag = lagrange_polynomial(state, idx)
            r = geometry_bobyqa(lag, l, u, delta, state)
            assert np.all(xk + r >= l - 1e-12) and np.all(xk + r <= u + 1e-12)
            assert np.linalg.norm(r) <= delta * (1 + 1e-12)
            pts = ball_box_samples(rng, xk, l, u, delta, 10_000)
            grid_max = max(abs(lag.value(state, pt)) for pt in pts)
            assert abs(lag.value(state, xk + r)) >= 0.5 * grid_max

    def test_lincoa_empty_working_set_parallel_gradient(self):
        rng = np.random.default_rng(97)
        state = self._state(rng, 3, 7)
        xk = state.point(0)
        lag = lagrange_polynomial(state, 3)
        g = lag.gradient(state, xk)
        big = np.full(3, 1e9)
        r = geometry_lincoa(lag, np.zeros((0, 3)), 0.6, -big, big, state)
        cosine = abs(float(r @ g)) / (np.linalg.norm(r) * np.linalg.norm(g))
        assert abs(cosine - 1.0) <= 1e-10

    def test_lincoa_full_span_zero(self):
        rng = np.random.default_rng(101)
        state = self._state(rng, 2, 5)
        lag = lagrange_polynomial(state, 1)
        r = geometry_lincoa(lag, np.eye(2), 0.5, -np.ones(2), np.ones(2),
                            state)
        np.testing.assert_array_equal(r, np.zeros(2))

    def test_lincoa_orthogonal_row_keeps_gradient(self):
        rng = np.random.default_rng(103)
        state = self._state(rng, 3, 6)
        xk = state.point(0)
        lag = lagrange_polynomial(state, 2)
        lag.implicit[:] = 0.0
        lag.hess_explicit[:] = 0.0
        g = lag.gradient(state, xk)
        row = rng.normal(size=3)
        row -= (row @ g) / (g @ g) * g
        delta = 0.4
        big = np.full(3, 1e9)
        r = geometry_lincoa(lag, row.reshape(1, -1), delta, -big, big, state)
        assert abs(np.linalg.norm(r) - delta) <= 1e-10
        cosine = abs(float(r @ g)) / (np.linalg.norm(r) * np.linalg.norm(g))
        assert abs(cosine - 1.0) <= 1e-10
        assert abs(float(row @ r)) <= 1e-9 * np.linalg.norm(row) * delta
