import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermpc.errors import EmptyResult, NotContractive
from hiermpc.sets import (BallSet, EllipsoidSet, linear_image_outer,
                          minkowski_diff, minkowski_sum, rpi_outer, terminal_set)

radii = st.floats(min_value=0.0, max_value=1e6, allow_nan=False)


@given(radii, radii)
def test_ball_sum_exact(r1, r2):
    out = minkowski_sum(BallSet(3, r1), BallSet(3, r2))
    assert out.radius == r1 + r2


@given(radii, radii)
def test_ball_diff_exact_or_empty(r1, r2):
    if r1 >= r2:
        assert minkowski_diff(BallSet(2, r1), BallSet(2, r2)).radius == r1 - r2
    else:
        with pytest.raises(EmptyResult):
            minkowski_diff(BallSet(2, r1), BallSet(2, r2))


def test_ball_sum_sampling_oracle():
    # 1000 sampled sums of members must land inside the computed sum.
    rng = np.random.default_rng(0)
    a, b = BallSet(4, 1.3), BallSet(4, 0.4)
    out = minkowski_sum(a, b)
    for _ in range(1000):
        pa = rng.normal(size=4)
        pa *= rng.uniform(0, a.radius) / np.linalg.norm(pa)
        pb = rng.normal(size=4)
        pb *= rng.uniform(0, b.radius) / np.linalg.norm(pb)
        assert out.contains(pa + pb, tol=1e-12)


def test_ball_diff_sampling_oracle():
    # Every member of the difference, summed with any member of b, stays in a.
    rng = np.random.default_rng(1)
    a, b = BallSet(3, 2.0), BallSet(3, 0.75)
    diff = minkowski_diff(a, b)
    assert diff.radius == 1.25
    for _ in range(1000):
        pd = rng.normal(size=3)
        pd *= rng.uniform(0, diff.radius) / np.linalg.norm(pd)
        pb = rng.normal(size=3)
        pb *= rng.uniform(0, b.radius) / np.linalg.norm(pb)
        assert a.contains(pd + pb, tol=1e-12)


def test_linear_image_outer_norm_bound():
    rng = np.random.default_rng(2)
    K = rng.normal(size=(2, 5))
    ball = BallSet(5, 0.7)
    img = linear_image_outer(K, ball)
    assert img.dim == 2
    assert np.isclose(img.radius, np.linalg.norm(K, 2) * 0.7)
    for _ in range(1000):
        p = rng.normal(size=5)
        p *= rng.uniform(0, ball.radius) / np.linalg.norm(p)
        assert img.contains(K @ p, tol=1e-12)


def test_rpi_outer_scalar_geometric():
    # F = 0.5, rho_w = 1: the norm series is exactly geometric, radius 2.
    out = rpi_outer(np.array([[0.5]]), BallSet(1, 1.0), tol=1e-9)
    assert np.isclose(out.ball.radius, 2.0, rtol=1e-9)
    assert out.certificate_gap >= 0


def test_rpi_outer_zero_map():
    out = rpi_outer(np.zeros((3, 3)), BallSet(3, 0.8))
    assert np.isclose(out.ball.radius, 0.8)


def test_rpi_outer_rejects_unstable():
    with pytest.raises(NotContractive):
        rpi_outer(np.array([[1.0]]), BallSet(1, 1.0))


def test_rpi_outer_rejects_expansive_norm():
    # Schur but ||F||_2 > 1: no Euclidean ball can be one-step invariant.
    F = np.array([[0.0, 3.0], [0.0, 0.0]])
    assert np.max(np.abs(np.linalg.eigvals(F))) < 1
    with pytest.raises(NotContractive):
        rpi_outer(F, BallSet(2, 1.0))


def test_rpi_outer_invariance_random():
    # Acceptance-style sweep: random contractive maps, certified invariance.
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = rng.integers(1, 5)
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        V, _ = np.linalg.qr(rng.normal(size=(n, n)))
        sv = rng.uniform(0.0, 0.95, size=n)
        F = Q @ np.diag(sv) @ V.T
        w = BallSet(int(n), float(rng.uniform(0.01, 10.0)))
        out = rpi_outer(F, w, tol=1e-6)
        r = out.ball.radius
        assert np.linalg.norm(F, 2) * r + w.radius <= r * (1 + 1e-6) + 1e-12
        # Sampled one-step check.
        for _ in range(20):
            e = rng.normal(size=n)
            e *= rng.uniform(0, r) / max(np.linalg.norm(e), 1e-300)
            d = rng.normal(size=n)
            d *= w.radius / max(np.linalg.norm(d), 1e-300)
            assert out.ball.contains(F @ e + d, tol=1e-8 * max(1.0, r))


def test_terminal_set_scaling():
    # Hand case: P = I, K = k*I: alpha = (budget/k)^2.
    P = np.eye(2)
    K = 0.5 * np.eye(2)
    F = 0.3 * np.eye(2)
    out = terminal_set(F, P, K, BallSet(2, 1.0))
    assert np.isclose(out.level, 4.0)


def test_terminal_set_sampling_oracle():
    rng = np.random.default_rng(4)
    n, m = 3, 2
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    K = rng.normal(size=(m, n))
    F = 0.5 * np.eye(n)
    budget = BallSet(m, 2.0)
    out = terminal_set(F, P, K, budget)
    L = np.linalg.cholesky(P)
    worst = 0.0
    for _ in range(10_000):
        y = rng.normal(size=n)
        y *= rng.uniform(0, 1) ** (1 / n) / np.linalg.norm(y)
        x = np.sqrt(out.level) * np.linalg.solve(L.T, y)
        assert out.contains(x, tol=1e-9)
        worst = max(worst, np.linalg.norm(K @ x))
        assert np.linalg.norm(K @ x) <= budget.radius + 1e-9
    # The level is tight: boundary points get close to the budget.
    assert worst > 0.5 * budget.radius


def test_terminal_set_zero_gain_capped():
    out = terminal_set(0.5 * np.eye(2), np.eye(2), np.zeros((1, 2)), BallSet(1, 1.0),
                       level_cap=123.0)
    assert out.level == 123.0


def test_terminal_set_zero_budget_degenerate():
    with pytest.warns(UserWarning):
        out = terminal_set(0.5 * np.eye(2), np.eye(2), np.ones((1, 2)), BallSet(1, 0.0))
    assert out.level == 0.0 and out.degenerate


def test_ellipsoid_contains():
    e = EllipsoidSet(np.diag([4.0, 1.0]), 1.0)
    assert e.contains(np.array([0.49, 0.0]))
    assert not e.contains(np.array([0.51, 0.0]))
