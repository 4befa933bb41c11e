"""Fast-rate decentralized correction layer.

Between two slow ticks every subsystem independently plans a correction
input sequence that steers its projected deviation onto the slow layer's
one-step-ahead prediction (a hard terminal equality), then applies it with
local feedback on the gap between measured and planned deviations.  All
cross-subsystem information enters through the shared auxiliary simulation,
which is reset to the measured state at every slow tick.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DesignFailed, DimensionMismatch, InfeasibleLL
from .gains import dlqr
from .lti import InterconnectedModel
from .reduction import ReducedModel
from .sets import BallSet
from .solver import BallConstraint, QuadraticProgram, Status, solve_qp


@dataclass(frozen=True)
class AuxiliaryState:
    """Centralized constant-input rollout from a slow-tick measurement."""

    states: np.ndarray  # (period+1, n)
    u_held: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def simulate_auxiliary(model: InterconnectedModel, x_start: np.ndarray,
                       u_held: np.ndarray, period: int) -> AuxiliaryState:
    x_start = np.asarray(x_start, dtype=float)
    u_held = np.asarray(u_held, dtype=float)
    if x_start.shape != (model.n_states,) or u_held.shape != (model.n_inputs,):
        raise DimensionMismatch("auxiliary rollout dimensions inconsistent")
    states = np.empty((period + 1, model.n_states))
    states[0] = x_start
    Bu = model.B @ u_held
    for j in range(period):
        states[j + 1] = model.A @ states[j] + Bu
    return AuxiliaryState(states, u_held)


@dataclass(frozen=True)
class LLGain:
    blocks: tuple          # per-subsystem K_i, u_i = K_i x_i
    K: np.ndarray          # block diagonal collective gain
    F: np.ndarray          # A + B K, Schur by construction
    rho: float
    rounds: int


def design_ll_gain(model: InterconnectedModel, Q_blocks, R_blocks,
                   max_rounds: int = 12) -> LLGain:
    """Per-subsystem Riccati gains, detuned jointly until the coupled
    closed loop A + B diag(K_i) is Schur."""
    Q_blocks = [np.atleast_2d(np.asarray(Q, dtype=float)) for Q in Q_blocks]
    R_blocks = [np.atleast_2d(np.asarray(R, dtype=float)) for R in R_blocks]
    if len(Q_blocks) != model.n_subsystems or len(R_blocks) != model.n_subsystems:
        raise DimensionMismatch("need one weight pair per subsystem")
    scale = 1.0
    for rounds in range(1, max_rounds + 1):
        blocks = []
        for sub, Q, R in zip(model.subsystems, Q_blocks, R_blocks):
            K_i, _ = dlqr(sub.A, sub.B, Q, scale * R)
            blocks.append(K_i)
        K = scipy.linalg.block_diag(*blocks)
        F = model.A + model.B @ K
        rho = float(np.max(np.abs(np.linalg.eigvals(F))))
        if rho < 1.0:
            return LLGain(tuple(blocks), K, F, rho, rounds)
        scale *= 4.0
    raise DesignFailed(
        f"coupled fast loop not Schur after {max_rounds} detuning rounds")


@dataclass(frozen=True)
class DeltaPlan:
    subsystem: int
    u_steps: np.ndarray        # (period, m_i) planned corrections
    states: np.ndarray         # (period+1, n_i) planned deviations, start 0
    terminal_residual: float
    objective: float
    iterations: int


def correction_prediction(A: np.ndarray, B: np.ndarray, period: int):
    """Stacked prediction maps: states j=1..period-1 for the cost, the
    period-step reachability row for the terminal equality."""
    n, m = B.shape
    powers = [np.eye(n)]
    for _ in range(period):
        powers.append(A @ powers[-1])
    Gamma = np.zeros(((period - 1) * n, period * m))
    for j in range(1, period):
        for r in range(j):
            Gamma[(j - 1) * n:j * n, r * m:(r + 1) * m] = powers[j - 1 - r] @ B
    reach = np.hstack([powers[period - 1 - r] @ B for r in range(period)])
    return Gamma, reach


def solve_ll(model: InterconnectedModel, reduced: ReducedModel, i: int,
             x_bar_pred_i: np.ndarray, aux_terminal: np.ndarray,
             budget: BallSet, Q_i: np.ndarray, R_i: np.ndarray, period: int,
             tol_primal: float = 1e-8, tol_dual: float = 1e-8,
             max_iters: int = 50_000) -> DeltaPlan:
    """Correction plan for subsystem i over one slow period.

    Decision: the per-step correction sequence; the planned deviation starts
    at zero (slow-tick reset), its projection must land exactly on the slow
    layer's prediction gap, and each step stays inside `budget`.
    """
    sub = model.subsystems[i]
    n_i, m_i = sub.n_states, sub.n_inputs
    beta_i = reduced.beta_block(i, model)
    aux_term_i = np.asarray(aux_terminal, dtype=float)
    if aux_term_i.shape == (model.n_states,):
        aux_term_i = aux_term_i[model.state_slice(i)]
    rhs = np.asarray(x_bar_pred_i, dtype=float) - beta_i @ aux_term_i

    Q_i = np.atleast_2d(np.asarray(Q_i, dtype=float))
    R_i = np.atleast_2d(np.asarray(R_i, dtype=float))
    Gamma, reach = correction_prediction(sub.A, sub.B, period)
    d = period * m_i
    Qbar = np.kron(np.eye(period - 1), Q_i)
    Rbar = np.kron(np.eye(period), R_i)
    H = 2.0 * (Gamma.T @ Qbar @ Gamma + Rbar)
    A_eq = beta_i @ reach
    b_eq = rhs
    cons = [BallConstraint(np.arange(r * m_i, (r + 1) * m_i), budget.radius)
            for r in range(period)]
    prob = QuadraticProgram(H, np.zeros(d), A_eq, b_eq, tuple(cons))
    res = solve_qp(prob, tol_primal, tol_dual, max_iters)
    if res.status is not Status.OPTIMAL:
        # Smallest-total-energy sequence hitting the target, for diagnosis.
        H_pinv = np.linalg.pinv(A_eq)
        min_norm = float(np.linalg.norm(H_pinv @ rhs))
        raise InfeasibleLL(
            f"subsystem {i}: correction target unreachable within budget "
            f"(|target|={np.linalg.norm(rhs):.6g}, per-step budget={budget.radius:.6g}, "
            f"least-norm sequence={min_norm:.6g})",
            subsystem=i,
            diagnostics={"status": res.status.value,
                         "target_norm": float(np.linalg.norm(rhs)),
                         "budget": budget.radius,
                         "least_norm_sequence": min_norm})
    u_steps = res.x.reshape(period, m_i)
    states = np.zeros((period + 1, n_i))
    for j in range(period):
        states[j + 1] = sub.A @ states[j] + sub.B @ u_steps[j]
    terminal_residual = float(np.max(np.abs(beta_i @ states[-1] - rhs)))
    return DeltaPlan(i, u_steps, states, terminal_residual, res.objective,
                     res.iterations)


def apply_correction(plan: DeltaPlan, gain_block: np.ndarray,
                     delta_x_i: np.ndarray, j: int) -> np.ndarray:
    """Correction input at fast offset j: planned step plus local feedback on
    the measured-minus-planned deviation gap."""
    if not 0 <= j < plan.u_steps.shape[0]:
        raise DimensionMismatch(f"fast offset {j} outside the plan horizon")
    return plan.u_steps[j] + gain_block @ (np.asarray(delta_x_i, dtype=float)
                                           - plan.states[j])
