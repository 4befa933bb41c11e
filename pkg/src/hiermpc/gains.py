"""Discrete-time LQR and Lyapunov helpers shared by both controller layers."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DesignFailed, NotSchur


def dlqr(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray):
    """Stabilizing gain K with closed loop A + B K (note the plus convention).

    Returns (K, P) with P the stabilizing Riccati solution.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    try:
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    except np.linalg.LinAlgError as exc:
        raise DesignFailed(f"Riccati solve failed: {exc}") from exc
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return K, P


def dlyap(F: np.ndarray, Q: np.ndarray, residual_tol: float = 1e-8,
          max_doublings: int = 200) -> np.ndarray:
    """Solve P = F'PF + Q by series doubling.

    P = sum_k (F')^k Q F^k; the partial sum doubles its horizon each pass,
    so convergence is quadratic for Schur F.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    rho = float(np.max(np.abs(np.linalg.eigvals(F))))
    if rho >= 1.0:
        raise NotSchur(f"Lyapunov series diverges: spectral radius {rho:.6g} >= 1")
    P = Q.copy()
    M = F.copy()
    for _ in range(max_doublings):
        P = P + M.T @ P @ M
        M = M @ M
        residual = float(np.max(np.abs(F.T @ P @ F - P + Q)))
        if residual <= residual_tol * max(1.0, float(np.max(np.abs(P)))):
            return 0.5 * (P + P.T)
    raise NotSchur(f"Lyapunov doubling did not reach residual {residual_tol}")
