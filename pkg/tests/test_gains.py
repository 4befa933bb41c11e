import numpy as np
import pytest

from hiermpc.errors import NotSchur
from hiermpc.gains import dlqr, dlyap


def test_dlqr_scalar_hand_riccati():
    # a=0.9, b=q=r=1: P^2 - a^2 P - 1 = 0 by hand, K = -aP/(1+P).
    a = 0.9
    P_hand = (a * a + np.sqrt(a ** 4 + 4.0)) / 2.0
    K, P = dlqr([[a]], [[1.0]], [[1.0]], [[1.0]])
    assert np.isclose(P[0, 0], P_hand, atol=1e-10)
    assert np.isclose(K[0, 0], -a * P_hand / (1.0 + P_hand), atol=1e-10)
    assert abs(a + K[0, 0]) < 1.0


def test_dlqr_closed_loop_schur():
    rng = np.random.default_rng(13)
    for _ in range(10):
        n, m = 4, 2
        A = rng.normal(size=(n, n)) * 0.6
        B = rng.normal(size=(n, m))
        K, _ = dlqr(A, B, np.eye(n), np.eye(m))
        assert np.max(np.abs(np.linalg.eigvals(A + B @ K))) < 1.0


def test_dlyap_kronecker_oracle():
    rng = np.random.default_rng(14)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        F = rng.normal(size=(n, n))
        F *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(F))), 1e-9)
        M = rng.normal(size=(n, n))
        Q = M @ M.T + np.eye(n)
        P = dlyap(F, Q)
        # Oracle: vec(P) = (I - kron(F', F'))^{-1} vec(Q).
        vecP = np.linalg.solve(np.eye(n * n) - np.kron(F.T, F.T), Q.reshape(-1))
        assert np.allclose(P, vecP.reshape(n, n), atol=1e-8 * max(1, np.max(np.abs(P))))
        assert np.max(np.abs(F.T @ P @ F - P + Q)) <= 1e-8 * max(1.0, np.max(np.abs(P)))


def test_dlyap_rejects_unstable():
    with pytest.raises(NotSchur):
        dlyap(np.array([[1.01]]), np.eye(1))
