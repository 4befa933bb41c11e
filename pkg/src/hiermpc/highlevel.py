"""Slow-rate reduced-order tube controller.

The reduced model is lifted to the slow clock (one slow step = `period` fast
steps), a disturbance-rejecting gain is designed against both the reduced
and the full lifted loop, and each slow step solves a tube-tightened QP
whose first nominal state is a free variable anchored to the projected
plant state by the invariant-ball constraint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DesignFailed, InfeasibleHL
from .gains import dlqr, dlyap
from .lti import InterconnectedModel
from .reduction import ReducedModel
from .sets import BallSet, EllipsoidSet
from .solver import (BallConstraint, EllipsoidConstraint, QuadraticProgram,
                     Status, solve_qp)


@dataclass(frozen=True)
class SlowModel:
    """Reduced dynamics sampled at the slow rate."""

    A: np.ndarray
    B: np.ndarray
    period: int

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]


def lift(reduced: ReducedModel, period: int) -> SlowModel:
    """A_slow = A^period, B_slow = sum_{j<period} A^j B (held input)."""
    if period < 1:
        raise DesignFailed(f"period must be >= 1, got {period}")
    A_slow = np.linalg.matrix_power(reduced.A, period)
    B_slow = reduced.B.copy()
    for _ in range(period - 1):
        B_slow = reduced.A @ B_slow + reduced.B
    return SlowModel(A_slow, B_slow, period)


def lifted_input_matrix(A: np.ndarray, B: np.ndarray, period: int) -> np.ndarray:
    """sum_{j<period} A^j B for any state-space pair."""
    out = B.copy()
    for _ in range(period - 1):
        out = A @ out + B
    return out


@dataclass(frozen=True)
class GainDesign:
    K: np.ndarray
    F_red: np.ndarray
    F_full: np.ndarray
    rho_red: float
    rho_full: float
    rounds: int
    R_final: np.ndarray


def design_gain(slow: SlowModel, model: InterconnectedModel, reduced: ReducedModel,
                Q: np.ndarray, R: np.ndarray, max_rounds: int = 12) -> GainDesign:
    """Riccati gain on the lifted reduced pair, detuned until the full lifted
    closed loop A^period + (sum A^j B) K beta is Schur as well.

    Detuning multiplies R by 4 each round; a zero input matrix is accepted
    with K = 0 when the open loop is already Schur.
    """
    A_full_lift = np.linalg.matrix_power(model.A, slow.period)
    B_full_lift = lifted_input_matrix(model.A, model.B, slow.period)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R_cur = np.atleast_2d(np.asarray(R, dtype=float))

    if float(np.max(np.abs(slow.B))) <= 1e-14:
        K = np.zeros((slow.n_inputs, slow.n_states))
        rho_red = float(np.max(np.abs(np.linalg.eigvals(slow.A))))
        if rho_red >= 1.0:
            raise DesignFailed("zero input authority and unstable slow dynamics")
        rho_full = float(np.max(np.abs(np.linalg.eigvals(A_full_lift))))
        return GainDesign(K, slow.A.copy(), A_full_lift, rho_red, rho_full, 0, R_cur)

    for rounds in range(1, max_rounds + 1):
        K, _ = dlqr(slow.A, slow.B, Q, R_cur)
        F_red = slow.A + slow.B @ K
        F_full = A_full_lift + B_full_lift @ K @ reduced.beta
        rho_red = float(np.max(np.abs(np.linalg.eigvals(F_red))))
        rho_full = float(np.max(np.abs(np.linalg.eigvals(F_full))))
        if rho_red < 1.0 and rho_full < 1.0:
            return GainDesign(K, F_red, F_full, rho_red, rho_full, rounds, R_cur)
        R_cur = 4.0 * R_cur
    raise DesignFailed(
        f"no gain made both lifted loops Schur within {max_rounds} detuning rounds")


def terminal_cost(F: np.ndarray, K: np.ndarray, Q: np.ndarray, R: np.ndarray,
                  residual_tol: float = 1e-8) -> np.ndarray:
    """P solving F'PF - P = -(Q + K'RK) for the tube-ancillary loop."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return dlyap(np.asarray(F, dtype=float), Q + K.T @ R @ K, residual_tol)


@dataclass(frozen=True)
class HLDesign:
    """Everything the slow layer needs online."""

    K: np.ndarray
    F_red: np.ndarray
    F_full: np.ndarray
    P: np.ndarray
    tube: BallSet
    terminal: EllipsoidSet
    input_tight: BallSet
    Q: np.ndarray
    R: np.ndarray
    horizon: int


@dataclass(frozen=True)
class HLSolution:
    x_nominal: np.ndarray
    u_nominal_seq: np.ndarray
    u_applied: np.ndarray
    x_nominal_next: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float


def _transcribe(design: HLDesign, slow: SlowModel, x_proj: np.ndarray):
    n, m, N = slow.n_states, slow.n_inputs, design.horizon
    d = n * (N + 1) + m * N

    def x_idx(k):
        return np.arange(k * n, (k + 1) * n)

    def u_idx(k):
        return np.arange(n * (N + 1) + k * m, n * (N + 1) + (k + 1) * m)

    H = np.zeros((d, d))
    for k in range(N):
        H[np.ix_(x_idx(k), x_idx(k))] = design.Q
        H[np.ix_(u_idx(k), u_idx(k))] = design.R
    H[np.ix_(x_idx(N), x_idx(N))] = design.P
    H = 2.0 * H + 1e-10 * np.eye(d)

    A_eq = np.zeros((n * N, d))
    for k in range(N):
        rows = slice(k * n, (k + 1) * n)
        A_eq[rows, x_idx(k + 1)] = np.eye(n)
        A_eq[rows, x_idx(k)] = -slow.A
        A_eq[rows, u_idx(k)] = -slow.B
    b_eq = np.zeros(n * N)

    cons = [BallConstraint(x_idx(0), design.tube.radius, center=np.asarray(x_proj))]
    for k in range(N):
        cons.append(BallConstraint(u_idx(k), design.input_tight.radius))
    cons.append(EllipsoidConstraint(x_idx(N), design.terminal.shape,
                                    design.terminal.level))
    return H, A_eq, b_eq, cons, x_idx, u_idx


def feasibility_gap(design: HLDesign, slow: SlowModel, x_proj: np.ndarray) -> float:
    """Distance from the projected state to the set of admissible first
    nominal states; infeasibility means this exceeds the tube radius."""
    H, A_eq, b_eq, cons, x_idx, _ = _transcribe(design, slow, x_proj)
    d = H.shape[0]
    H_gap = 1e-12 * np.eye(d)
    H_gap[np.ix_(x_idx(0), x_idx(0))] += np.eye(slow.n_states)
    g = np.zeros(d)
    g[x_idx(0)] = -np.asarray(x_proj, dtype=float)
    res = solve_qp(QuadraticProgram(H_gap, g, A_eq, b_eq, tuple(cons[1:])))
    return float(np.linalg.norm(res.x[x_idx(0)] - x_proj))


def solve_hl(design: HLDesign, slow: SlowModel, x_proj: np.ndarray,
             tol_primal: float = 1e-8, tol_dual: float = 1e-8,
             max_iters: int = 50_000,
             warm_start: np.ndarray | None = None,
             first_step: bool = False) -> HLSolution:
    """One slow-step tube MPC solve from the projected plant state.

    Raises InfeasibleHL with a tube-gap diagnostic when no admissible plan
    exists; on the first step the gap is always computed so the failure
    report can say how far the start is from the feasible set.
    """
    x_proj = np.asarray(x_proj, dtype=float)
    H, A_eq, b_eq, cons, x_idx, u_idx = _transcribe(design, slow, x_proj)
    prob = QuadraticProgram(H, np.zeros(H.shape[0]), A_eq, b_eq, tuple(cons))
    res = solve_qp(prob, tol_primal, tol_dual, max_iters, x0=warm_start)
    if res.status is not Status.OPTIMAL:
        diagnostics = {
            "status": res.status.value,
            "iterations": res.iterations,
            "primal_residual": res.primal_residual,
            "dual_residual": res.dual_residual,
        }
        if first_step or res.status is Status.INFEASIBLE:
            gap = feasibility_gap(design, slow, x_proj)
            diagnostics["tube_gap"] = gap
            diagnostics["tube_radius"] = design.tube.radius
        raise InfeasibleHL(
            f"slow-layer problem not solved ({res.status.value}); "
            f"diagnostics: {diagnostics}", diagnostics)
    n, m, N = slow.n_states, slow.n_inputs, design.horizon
    x_nom = res.x[x_idx(0)]
    u_seq = res.x[n * (N + 1):].reshape(N, m)
    u_applied = u_seq[0] + design.K @ (x_proj - x_nom)
    x_next = res.x[x_idx(1)]
    return HLSolution(x_nom, u_seq, u_applied, x_next, res.objective,
                      res.iterations, res.primal_residual, res.dual_residual)


def run_tube_soak(design: HLDesign, slow: SlowModel, x_proj0: np.ndarray,
                  disturbance: BallSet, n_steps: int, seed: int = 0):
    """Closed slow loop with worst-case disturbances on the boundary of the
    disturbance ball; returns the per-step tube errors.  Used to exercise
    recursive feasibility."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x_proj0, dtype=float)
    errors = []
    warm = None
    for _ in range(n_steps):
        sol = solve_hl(design, slow, x, warm_start=warm)
        errors.append(float(np.linalg.norm(x - sol.x_nominal)))
        w = rng.normal(size=slow.n_states)
        norm = float(np.linalg.norm(w))
        w = w * (disturbance.radius / norm) if norm > 0 else w
        x = slow.A @ x + slow.B @ sol.u_applied + w
        warm = None
    return errors
