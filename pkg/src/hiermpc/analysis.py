"""Offline certificate constants and the radius-allocation program.

Everything here is norm bookkeeping on matrix powers: how far the lifted
reduced response drifts from the projected full response (kappa and the
projection defect), how much correction authority a subsystem has through
its projected reachability row (sigma), how the corrections of one
subsystem leak into the input budget of another (the interaction matrix),
and the resulting disturbance, input-leakage and state-tail radii.  All
norms are spectral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTuning, RankDeficient
from .highlevel import lifted_input_matrix
from .lowlevel import LLGain
from .lti import InterconnectedModel, reachability_matrix
from .reduction import ReducedModel
from .sets import BallSet
from .solver import Status, solve_lp

_SIGMA_FLOOR = 1e-12


def lifted_input_mismatch(model: InterconnectedModel, reduced: ReducedModel,
                          period: int) -> float:
    """kappa: norm of (held-input response of the reduced lift) minus the
    projected held-input response of the full lift; zero when the reduction
    commutes with the dynamics (decoupled modal case)."""
    lift_red = lifted_input_matrix(reduced.A, reduced.B, period)
    lift_full = lifted_input_matrix(model.A, model.B, period)
    return float(np.linalg.norm(lift_red - reduced.beta @ lift_full, 2))


def kappa_exponential_bound(model: InterconnectedModel, reduced: ReducedModel,
                            period: int) -> float:
    """Series-tail bound: kappa <= ||A_red^N|| ||G_red(1)|| + ||beta|| ||A^N|| ||G(1)||."""
    g_red = np.linalg.solve(np.eye(reduced.n_states) - reduced.A, reduced.B)
    g_full = np.linalg.solve(np.eye(model.n_states) - model.A, model.B)
    t1 = float(np.linalg.norm(np.linalg.matrix_power(reduced.A, period), 2)
               * np.linalg.norm(g_red, 2))
    t2 = float(np.linalg.norm(reduced.beta, 2)
               * np.linalg.norm(np.linalg.matrix_power(model.A, period), 2)
               * np.linalg.norm(g_full, 2))
    return t1 + t2


def projection_defect(model: InterconnectedModel, reduced: ReducedModel,
                      period: int) -> np.ndarray:
    """A_red^N beta - beta A^N: how far the projection fails to commute with
    the N-step transition."""
    return (np.linalg.matrix_power(reduced.A, period) @ reduced.beta
            - reduced.beta @ np.linalg.matrix_power(model.A, period))


def projected_reachability_sigma(model: InterconnectedModel, reduced: ReducedModel,
                                 period: int, i: int) -> float:
    """Smallest singular value of beta_i [A_ii^{N-1} B_ii ... B_ii]."""
    sub = model.subsystems[i]
    reach = reachability_matrix(sub.A, sub.B, period)
    H_i = reduced.beta_block(i, model) @ reach
    sigma = float(np.linalg.svd(H_i, compute_uv=False)[-1])
    if sigma <= _SIGMA_FLOOR:
        raise RankDeficient(
            f"subsystem {i}: projected reachability row is rank deficient "
            f"(sigma = {sigma:.3e}); the correction layer cannot hit its target")
    return sigma


def _step_norm_table(A: np.ndarray, B: np.ndarray, period: int) -> np.ndarray:
    """t(j) = sum_{r<j} ||A^r B||, j = 0..period."""
    out = np.zeros(period + 1)
    term = B.copy()
    for j in range(1, period + 1):
        out[j] = out[j - 1] + float(np.linalg.norm(term, 2))
        term = A @ term
    return out


def delta_state_bounds(model: InterconnectedModel, rho_delta_u_hat: np.ndarray,
                       period: int) -> np.ndarray:
    """Per-subsystem deviation bounds: row i, column j holds the worst-case
    norm of subsystem i's planned deviation after j fast steps."""
    rows = []
    for i, sub in enumerate(model.subsystems):
        rows.append(rho_delta_u_hat[i] * _step_norm_table(sub.A, sub.B, period))
    return np.array(rows)


def interaction_matrix(model: InterconnectedModel, ll_gain: LLGain,
                       period: int) -> np.ndarray:
    """Lambda[i, j]: worst-case leakage of subsystem j's planned deviations
    into subsystem i's feedback correction, per unit of j's step budget."""
    M = model.n_subsystems
    A_c = model.A - model.block_diagonal_A()
    lam = np.zeros((M, M))
    if period <= 2:
        return lam
    # front(r) = ||K_i S_i F^{period-r-1} A_c|| for r = 2..period-1
    F_pows = [np.eye(model.n_states)]
    for _ in range(period):
        F_pows.append(ll_gain.F @ F_pows[-1])
    inner = [_step_norm_table(sub.A, sub.B, period) for sub in model.subsystems]
    for i in range(M):
        Ki_Si = ll_gain.blocks[i] @ model.state_selector(i)
        for r in range(2, period):
            front = float(np.linalg.norm(Ki_Si @ F_pows[period - r - 1] @ A_c, 2))
            for j in range(M):
                lam[i, j] += front * inner[j][r - 1]
    return lam


def delta_input_bounds(model: InterconnectedModel, ll_gain: LLGain,
                       rho_delta_u_hat: np.ndarray, period: int) -> np.ndarray:
    """Worst-case feedback-correction magnitude per subsystem and fast step
    (zero at steps 0 and 1; the feedback term needs two steps to build up)."""
    M = model.n_subsystems
    state_tbl = delta_state_bounds(model, rho_delta_u_hat, period)
    rss = np.sqrt(np.sum(state_tbl ** 2, axis=0))  # collective deviation bound
    A_c = model.A - model.block_diagonal_A()
    F_pows = [np.eye(model.n_states)]
    for _ in range(period):
        F_pows.append(ll_gain.F @ F_pows[-1])
    out = np.zeros((M, period + 1))
    for i in range(M):
        Ki_Si = ll_gain.blocks[i] @ model.state_selector(i)
        for j in range(2, period + 1):
            total = 0.0
            for r in range(2, j + 1):
                front = float(np.linalg.norm(Ki_Si @ F_pows[j - r] @ A_c, 2))
                total += front * rss[r - 1]
            out[i, j] = total
    return out


def disturbance_radius(model: InterconnectedModel, reduced: ReducedModel,
                       ll_gain: LLGain, rho_delta_u_hat: np.ndarray,
                       period: int) -> float:
    """Worst-case slow-step prediction mismatch caused by the corrections
    acting through the coupling; exactly zero for a decoupled plant."""
    state_tbl = delta_state_bounds(model, rho_delta_u_hat, period)
    rss = np.sqrt(np.sum(state_tbl ** 2, axis=0))
    A_c = model.A - model.block_diagonal_A()
    F_pows = [np.eye(model.n_states)]
    for _ in range(period):
        F_pows.append(ll_gain.F @ F_pows[-1])
    total = 0.0
    for j in range(2, period + 1):
        front = float(np.linalg.norm(reduced.beta @ F_pows[period - j] @ A_c, 2))
        total += front * rss[j - 1]
    return total


def correction_gain_norm(model: InterconnectedModel, ll_gain: LLGain,
                         period: int) -> float:
    """Norm of the map from stacked planned corrections to the slow-step
    state increment they cause, feedback loop included."""
    n, m = model.n_states, model.n_inputs
    A = model.A
    A_d = model.block_diagonal_A()
    A_c = A - A_d
    reach_rev = np.hstack([np.linalg.matrix_power(A, period - 1 - r) @ model.B
                           for r in range(period)])
    F_pows = [np.eye(n)]
    for _ in range(period):
        F_pows.append(ll_gain.F @ F_pows[-1])
    F_blk = np.zeros((period * n, period * n))
    for j in range(period):
        for r in range(j):
            F_blk[j * n:(j + 1) * n, r * n:(r + 1) * n] = F_pows[j - 1 - r]
    B_dec = np.zeros((period * n, period * m))
    Ad_pows = [np.eye(n)]
    for _ in range(period):
        Ad_pows.append(A_d @ Ad_pows[-1])
    for j in range(period):
        for c in range(j):
            B_dec[j * n:(j + 1) * n, c * m:(c + 1) * m] = Ad_pows[j - 1 - c] @ model.B
    K_blk = np.kron(np.eye(period), ll_gain.K)
    Ac_blk = np.kron(np.eye(period), A_c)
    total_map = reach_rev @ (np.eye(period * m) + K_blk @ F_blk @ Ac_blk @ B_dec)
    return float(np.linalg.norm(total_map, 2))


@dataclass(frozen=True)
class RadiusAllocation:
    """Input-budget split between the held slow inputs and the fast
    corrections, per subsystem."""

    rho_delta_u_hat: np.ndarray
    rho_u_bar: np.ndarray
    objective: float
    gamma1: float
    gamma2: float
    slack: float

    @property
    def rho_u_bar_outer(self) -> float:
        return float(np.sqrt(np.sum(self.rho_u_bar ** 2)))


def tune_radii(model: InterconnectedModel, reduced: ReducedModel, ll_gain: LLGain,
               period: int, gamma1: float = 1.0, gamma2: float = 1.0,
               u_bar_min: float | np.ndarray = 0.0) -> RadiusAllocation:
    """Allocate per-subsystem input budgets by linear programming.

    max gamma1 * sum(correction radii) + gamma2 * sum(held radii), subject to
    the strict small-gain inequality and the total per-subsystem budget with
    interaction leakage.  Both rows are tightened by the same slack (scaled
    to the budget) so that re-substituting the returned radii leaves a
    strictly positive margin in every constraint, not just the strict one.
    For a decoupled plant the program degenerates to
        correction_i >= slack,  correction_i + held_i <= budget_i - slack
    and the held radii absorb the budget.

    `u_bar_min` reserves held-input authority: with a correction-heavy
    objective the optimum would otherwise drain the held radii to zero and
    leave the slow layer nothing to steer with.
    """
    M = model.n_subsystems
    kappa = lifted_input_mismatch(model, reduced, period)
    sigma = np.array([projected_reachability_sigma(model, reduced, period, i)
                      for i in range(M)])
    lam = interaction_matrix(model, ll_gain, period)
    rho_u = model.input_radii()
    slack = 1e-9 * max(1.0, float(np.max(rho_u)))
    floor = np.broadcast_to(np.asarray(u_bar_min, dtype=float), (M,))

    c = np.concatenate([np.full(M, gamma1), np.full(M, gamma2)])
    # Rows 1..M: -delta_i + (kappa / (sqrt(N) sigma_i)) * sum(u_bar) <= -slack
    A1 = np.hstack([-np.eye(M),
                    np.tile((kappa / (np.sqrt(period) * sigma))[:, None], (1, M))])
    b1 = np.full(M, -slack)
    # Rows M+1..2M: (I + Lambda) delta + u_bar <= rho_u - slack
    A2 = np.hstack([np.eye(M) + lam, np.eye(M)])
    b2 = rho_u.astype(float) - slack
    res = solve_lp(c, np.vstack([A1, A2]), np.concatenate([b1, b2]),
                   np.concatenate([np.zeros(M), floor]))
    if res.status is not Status.OPTIMAL:
        extra = " with the requested held-input floor" if np.any(floor > 0) else ""
        raise InfeasibleTuning(
            f"no budget split satisfies the strict small-gain inequality{extra}; "
            "increase the slow period or the input limits")
    return RadiusAllocation(res.x[:M].copy(), res.x[M:].copy(),
                            float(res.objective), gamma1, gamma2, slack)


@dataclass(frozen=True)
class CertificateReport:
    """All constants the convergence argument needs, with pass flags."""

    period: int
    kappa: float
    kappa_bound: float
    defect_norm: float
    reach_norm: float
    al_power_norm: float
    sigma: np.ndarray
    chi: np.ndarray
    lambda_margins: np.ndarray
    rho_w: float
    rho_x: float
    delta_state_table: np.ndarray
    delta_input_table: np.ndarray
    clauses: dict
    radii: RadiusAllocation
    x0_bound_ok: bool | None

    @property
    def assumptions_ok(self) -> bool:
        return all(self.clauses.values())


def certificate_constants(model: InterconnectedModel, reduced: ReducedModel,
                          ll_gain: LLGain, radii: RadiusAllocation, period: int,
                          x0: np.ndarray | None = None) -> CertificateReport:
    M = model.n_subsystems
    kappa = lifted_input_mismatch(model, reduced, period)
    kappa_bnd = kappa_exponential_bound(model, reduced, period)
    defect = projection_defect(model, reduced, period)
    defect_norm = float(np.linalg.norm(defect, 2))
    reach_norm = float(np.linalg.norm(
        reachability_matrix(model.A, model.B, period), 2))
    al_pow = float(np.linalg.norm(np.linalg.matrix_power(model.A, period), 2))
    sigma = np.array([projected_reachability_sigma(model, reduced, period, i)
                      for i in range(M)])
    rho_du = radii.rho_delta_u_hat
    rho_ub_out = radii.rho_u_bar_outer
    rho_u = model.input_radii()
    rho_u_outer = float(np.sqrt(np.sum(rho_u ** 2)))

    margins_num = np.sqrt(period) * sigma * rho_du - kappa * rho_ub_out
    with np.errstate(divide="ignore"):
        lambda_margins = np.where(
            defect_norm > 0, margins_num / max(defect_norm, 1e-300),
            np.inf)
    denom = (1.0 - al_pow) * margins_num
    chi = np.where(
        (al_pow < 1.0) & (margins_num > 0),
        np.sqrt(period) * rho_u_outer * reach_norm * defect_norm
        / np.where(denom > 0, denom, 1.0),
        np.inf)

    state_tbl = delta_state_bounds(model, rho_du, period)
    input_tbl = delta_input_bounds(model, ll_gain, rho_du, period)
    rho_w = disturbance_radius(model, reduced, ll_gain, rho_du, period)
    kd = correction_gain_norm(model, ll_gain, period)
    rho_x = kd * float(np.sqrt(period)) * float(np.sqrt(np.sum(rho_du ** 2)))

    clauses = {
        "open_loop_contraction": bool(al_pow < 1.0),
        "projected_reachability": bool(np.all(sigma > _SIGMA_FLOOR)),
        "small_gain_strict": bool(np.all(margins_num > 0)),
        "leakage_contraction": bool(np.all(chi <= 1.0)),
        "budget_inclusion": bool(np.all(
            radii.rho_u_bar + rho_du + input_tbl[:, period - 1] <= rho_u + 1e-12)),
    }
    x0_ok = None
    if x0 is not None:
        x0_ok = bool(np.linalg.norm(np.asarray(x0, dtype=float))
                     <= float(np.min(lambda_margins)))
    return CertificateReport(period, kappa, kappa_bnd, defect_norm, reach_norm,
                             al_pow, sigma, chi, lambda_margins, rho_w, rho_x,
                             state_tbl, input_tbl, clauses, radii, x0_ok)


def disturbance_set(reduced: ReducedModel, report: CertificateReport) -> BallSet:
    return BallSet(reduced.n_states, report.rho_w)


def sweep_constants(model: InterconnectedModel, reduced: ReducedModel,
                    ll_gain_factory, radii: RadiusAllocation, periods) -> list:
    """Re-evaluate the certificate constants over a grid of slow periods with
    the radii held fixed; `ll_gain_factory(period)` supplies the fast gain
    (it does not depend on the period for Riccati designs, but the caller
    decides)."""
    rows = []
    for period in periods:
        gain = ll_gain_factory(period)
        rep = certificate_constants(model, reduced, gain, radii, int(period))
        rows.append(rep)
    return rows
