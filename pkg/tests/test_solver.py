import itertools

import numpy as np
import pytest
import scipy.linalg
from scipy.optimize import brentq

from hiermpc.errors import UnboundedProblem
from hiermpc.solver import (BallConstraint, BoxConstraint, EllipsoidConstraint,
                            QuadraticProgram, Status, solve_lp, solve_qp)


# ---------------------------------------------------------------------------
# Oracles


def qp_oracle_one_ball(H, g, A_eq, b_eq, ball):
    """Active-set enumeration for a QP with equalities and one ball.

    Inactive case: plain KKT solve.  Active case: the multiplier mu >= 0
    solves ||S x(mu) - center|| = radius; the distance is non-increasing in
    mu for H > 0, so a bracketed root find is exact.
    """
    d = g.shape[0]
    S = np.zeros((ball.indices.size, d))
    S[np.arange(ball.indices.size), ball.indices] = 1.0
    center = ball.center if ball.center is not None else np.zeros(ball.indices.size)

    def kkt_solve(mu):
        Haug = H + mu * (S.T @ S)
        rhs_top = -g + mu * (S.T @ center)
        if A_eq is None:
            return np.linalg.solve(Haug, rhs_top)
        r = A_eq.shape[0]
        K = np.block([[Haug, A_eq.T], [A_eq, np.zeros((r, r))]])
        return np.linalg.solve(K, np.concatenate([rhs_top, b_eq]))[:d]

    x = kkt_solve(0.0)
    dist = np.linalg.norm(S @ x - center)
    if dist <= ball.radius + 1e-12:
        return x
    hi = 1.0
    while np.linalg.norm(S @ kkt_solve(hi) - center) > ball.radius:
        hi *= 4.0
        assert hi < 1e18, "oracle bracket failed"
    mu = brentq(lambda m: np.linalg.norm(S @ kkt_solve(m) - center) - ball.radius,
                0.0, hi, xtol=1e-14, rtol=1e-15)
    return kkt_solve(mu)


def lp_oracle_vertices(c, A_in, b_in, lb):
    """Enumerate vertices of {A x <= b, x >= lb}; return the best objective."""
    d = c.shape[0]
    G = np.vstack([A_in, -np.eye(d)])
    h = np.concatenate([b_in, -lb])
    best = None
    for rows in itertools.combinations(range(G.shape[0]), d):
        Gs = G[list(rows)]
        if abs(np.linalg.det(Gs)) < 1e-12:
            continue
        v = np.linalg.solve(Gs, h[list(rows)])
        if np.all(G @ v <= h + 1e-9):
            val = float(c @ v)
            if best is None or val > best[0]:
                best = (val, v)
    return best


# ---------------------------------------------------------------------------
# QP tests


def test_qp_hand_kkt_ball():
    # min 1/2||x||^2 - 2 x1, ||x|| <= 1: active at x = (1, 0), objective -1.5.
    prob = QuadraticProgram(H=np.eye(2), g=np.array([-2.0, 0.0]),
                            constraints=[BallConstraint(np.arange(2), 1.0)])
    res = solve_qp(prob)
    assert res.status is Status.OPTIMAL
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-6)
    assert np.isclose(res.objective, -1.5, atol=1e-6)


def test_qp_equality_only_exact():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(4, 4))
    H = M @ M.T + 4 * np.eye(4)
    g = rng.normal(size=4)
    A = rng.normal(size=(2, 4))
    b = rng.normal(size=2)
    res = solve_qp(QuadraticProgram(H, g, A, b))
    assert res.status is Status.OPTIMAL
    assert np.max(np.abs(A @ res.x - b)) <= 1e-10
    # Lagrange conditions solved directly as the oracle.
    K = np.block([[H, A.T], [A, np.zeros((2, 2))]])
    oracle = np.linalg.solve(K, np.concatenate([-g, b]))[:4]
    assert np.allclose(res.x, oracle, atol=1e-10)


def test_qp_random_against_active_set_oracle():
    # Acceptance-style batch: random equality + ball programs vs the oracle.
    rng = np.random.default_rng(6)
    for trial in range(50):
        d = int(rng.integers(2, 7))
        M = rng.normal(size=(d, d))
        H = M @ M.T + (0.5 + rng.uniform()) * np.eye(d)
        g = rng.normal(size=d) * 2.0
        r = int(rng.integers(0, min(3, d)))
        if r:
            A_eq = rng.normal(size=(r, d))
            x_feas = rng.normal(size=d)
            b_eq = A_eq @ x_feas
        else:
            A_eq = b_eq = None
            x_feas = rng.normal(size=d)
        k = int(rng.integers(1, d + 1))
        idx = np.sort(rng.choice(d, size=k, replace=False))
        center = rng.normal(size=k) * 0.5 if rng.uniform() < 0.5 else None
        c0 = center if center is not None else np.zeros(k)
        radius = float(np.linalg.norm(x_feas[idx] - c0) + rng.uniform(0.05, 1.0))
        ball = BallConstraint(idx, radius, center)
        prob = QuadraticProgram(H, g, A_eq, b_eq, constraints=[ball])
        res = solve_qp(prob)
        assert res.status is Status.OPTIMAL, f"trial {trial} not solved"
        x_star = qp_oracle_one_ball(H, g, A_eq, b_eq, ball)
        obj_star = 0.5 * x_star @ H @ x_star + g @ x_star
        scale = max(1.0, abs(obj_star))
        assert abs(res.objective - obj_star) <= 1e-6 * scale, f"trial {trial}"


def test_qp_box_constraint():
    # min 1/2 (x-2)^2 with x <= 1 written in H,g form: x* = 1.
    prob = QuadraticProgram(H=np.eye(1), g=np.array([-2.0]),
                            constraints=[BoxConstraint(np.array([0]), -np.inf, 1.0)])
    res = solve_qp(prob)
    assert np.isclose(res.x[0], 1.0, atol=1e-7)


def test_qp_ellipsoid_constraint_matches_ball():
    # Ellipsoid with shape I and level rho^2 is the ball of radius rho.
    rng = np.random.default_rng(7)
    H = np.eye(3)
    g = rng.normal(size=3) * 3.0
    ball = BallConstraint(np.arange(3), 0.8)
    ell = EllipsoidConstraint(np.arange(3), np.eye(3), 0.64)
    res_b = solve_qp(QuadraticProgram(H, g, constraints=[ball]))
    res_e = solve_qp(QuadraticProgram(H, g, constraints=[ell]))
    assert np.allclose(res_b.x, res_e.x, atol=1e-6)


def test_qp_general_ellipsoid_kkt():
    # min 1/2||x||^2 + g'x s.t. x'Px <= 1; KKT solved by oracle root find.
    rng = np.random.default_rng(8)
    P = np.diag([4.0, 1.0, 0.25])
    g = np.array([-3.0, 1.0, -2.0])
    prob = QuadraticProgram(np.eye(3), g,
                            constraints=[EllipsoidConstraint(np.arange(3), P, 1.0)])
    res = solve_qp(prob)

    def x_of(mu):
        return np.linalg.solve(np.eye(3) + mu * P, -g)

    mu = brentq(lambda m: x_of(m) @ P @ x_of(m) - 1.0, 0.0, 1e6, xtol=1e-14)
    assert np.allclose(res.x, x_of(mu), atol=1e-6)


def test_qp_two_balls_projection_fixed_point():
    # Verified via KKT residual: gradient is a nonnegative combination of
    # active constraint normals.
    rng = np.random.default_rng(9)
    H = np.diag([1.0, 2.0, 1.0, 0.5])
    g = np.array([-4.0, 0.0, 2.0, -1.0])
    b1 = BallConstraint(np.array([0, 1]), 0.5)
    b2 = BallConstraint(np.array([2, 3]), 0.25)
    res = solve_qp(QuadraticProgram(H, g, constraints=[b1, b2]))
    assert res.status is Status.OPTIMAL
    x = res.x
    grad = H @ x + g
    for c in (b1, b2):
        v = x[c.indices]
        nv = np.linalg.norm(v)
        if nv >= c.radius - 1e-6:  # active: gradient anti-parallel to normal
            normal = v / nv
            tangential = grad[c.indices] - (grad[c.indices] @ normal) * normal
            assert np.linalg.norm(tangential) <= 1e-5
            assert grad[c.indices] @ normal <= 1e-7
        else:
            assert np.linalg.norm(grad[c.indices]) <= 1e-5


def test_qp_infeasible_divergence_certificate():
    # Equality pins x0 = 2 but the ball only allows ||x|| <= 1.
    prob = QuadraticProgram(np.eye(2), np.zeros(2),
                            A_eq=np.array([[1.0, 0.0]]), b_eq=np.array([2.0]),
                            constraints=[BallConstraint(np.arange(2), 1.0)])
    res = solve_qp(prob, max_iters=20_000)
    assert res.status is Status.INFEASIBLE


def test_qp_warm_start_determinism():
    rng = np.random.default_rng(10)
    H = np.eye(3)
    g = rng.normal(size=3)
    prob = QuadraticProgram(H, g, constraints=[BallConstraint(np.arange(3), 0.5)])
    r1 = solve_qp(prob, x0=np.ones(3))
    r2 = solve_qp(prob, x0=np.ones(3))
    assert r1.iterations == r2.iterations
    assert np.array_equal(r1.x, r2.x)


def test_qp_scaling_invariance():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(3, 3))
    H = M @ M.T + np.eye(3)
    g = rng.normal(size=3)
    ball = BallConstraint(np.arange(3), 0.3)
    r1 = solve_qp(QuadraticProgram(H, g, constraints=[ball]))
    r2 = solve_qp(QuadraticProgram(1e3 * H, 1e3 * g, constraints=[ball]))
    assert np.max(np.abs(r1.x - r2.x)) <= 1e-7


def test_qp_zero_radius_ball():
    prob = QuadraticProgram(np.eye(2), np.array([-1.0, -1.0]),
                            constraints=[BallConstraint(np.array([0]), 0.0)])
    res = solve_qp(prob)
    assert abs(res.x[0]) <= 1e-8
    assert np.isclose(res.x[1], 1.0, atol=1e-6)


# ---------------------------------------------------------------------------
# LP tests


def test_lp_hand_example_with_tie_break():
    # max x + y on the simplex face x + y <= 1: objective 1; the
    # lexicographically smallest optimal vertex is (0, 1).
    res = solve_lp(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]),
                   np.array([1.0]), np.zeros(2))
    assert res.status is Status.OPTIMAL
    assert np.isclose(res.objective, 1.0, atol=1e-9)
    assert np.allclose(res.x, [0.0, 1.0], atol=1e-7)


def test_lp_infeasible():
    # x >= 0 with x <= -1 is empty.
    res = solve_lp(np.array([1.0]), np.array([[1.0]]), np.array([-1.0]),
                   np.zeros(1))
    assert res.status is Status.INFEASIBLE


def test_lp_unbounded():
    with pytest.raises(UnboundedProblem):
        solve_lp(np.array([1.0]), np.array([[-1.0]]), np.array([0.0]),
                 np.zeros(1), lexicographic=False)


def test_lp_random_against_vertex_oracle():
    rng = np.random.default_rng(12)
    solved = 0
    for trial in range(50):
        d = int(rng.integers(2, 5))
        m = int(rng.integers(1, 5))
        A = rng.normal(size=(m, d))
        lb = rng.normal(size=d) - 2.0
        x_feas = lb + rng.uniform(0.5, 2.0, size=d)
        b = A @ x_feas + rng.uniform(0.1, 2.0, size=m)
        # Box rows keep the region bounded so vertex enumeration is exact.
        A_full = np.vstack([A, np.eye(d)])
        b_full = np.concatenate([b, x_feas + rng.uniform(1.0, 5.0, size=d)])
        c = rng.normal(size=d)
        best = lp_oracle_vertices(c, A_full, b_full, lb)
        assert best is not None
        res = solve_lp(c, A_full, b_full, lb, lexicographic=False)
        assert res.status is Status.OPTIMAL
        scale = max(1.0, abs(best[0]))
        assert abs(res.objective - best[0]) <= 1e-8 * scale, f"trial {trial}"
        assert res.primal_residual <= 1e-9
        assert res.dual_residual <= 1e-8
        solved += 1
    assert solved == 50


def test_lp_nonzero_lower_bounds():
    # max -x s.t. x >= 3: optimum at the bound.
    res = solve_lp(np.array([-1.0]), np.zeros((1, 1)), np.array([10.0]),
                   np.array([3.0]))
    assert np.isclose(res.x[0], 3.0, atol=1e-9)
