"""Offline design pipeline and the online two-rate closed loop.

`design_pipeline` walks the offline checklist in dependency order (order
reduction, slow and fast gain synthesis, input-budget allocation, certificate
constants, disturbance set, invariant tube, terminal cost and set) and fails
fast naming the first unmet item.  `run_closed_loop` then executes the slow
loop around the full plant: one tube-tightened slow solve per tick, the
shared constant-input auxiliary rollout, one correction plan per subsystem,
and the fast sub-loop applying held input plus corrections.  Every quantity
the runtime invariants need is recorded; persistence and re-verification
live in `trace`.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .analysis import (CertificateReport, RadiusAllocation, certificate_constants,
                       disturbance_set, tune_radii)
from .errors import ConfigInvalid, DesignIncomplete, HierMPCError, InfeasibleHL, \
    InfeasibleLL
from .highlevel import (GainDesign, HLDesign, SlowModel, design_gain, lift,
                        solve_hl, terminal_cost)
from .lowlevel import LLGain, apply_correction, design_ll_gain, \
    simulate_auxiliary, solve_ll
from .lti import InterconnectedModel
from .reduction import ReducedModel, reduce_model, verify_reduction
from .sets import BallSet, EllipsoidSet, RPIApproximation, rpi_outer, terminal_set


# --------------------------------------------------------------- run config

@dataclass(frozen=True)
class RunConfig:
    """Everything one closed-loop experiment depends on.

    The default values are the benchmark scenario: 20 fast steps per slow
    step, a 10-step slow horizon, unit state weights with 0.1 input weight
    on the slow layer and 10 on the fast layer, and a start two degrees
    below equilibrium in every room.
    """

    period: int = 20
    horizon: int = 10
    n_slow_steps: int = 100
    retained_orders: tuple = (1, 1)
    q_slow: float = 1.0
    r_slow: float = 0.1
    q_fast: float = 1.0
    r_fast: float = 10.0
    gamma1: float = 50.0
    gamma2: float = 1.0
    u_bar_floor: float = 1.0
    x0: tuple = (-2.0,) * 10
    seed: int = 0
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iters: int = 200_000
    rpi_tol: float = 1e-6
    decoupled: bool = False

    def __post_init__(self):
        for name in ("period", "horizon", "n_slow_steps"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigInvalid(f"{name} must be a positive integer, got {value!r}")
        for name in ("q_slow", "r_slow", "q_fast", "r_fast"):
            if not float(getattr(self, name)) > 0:
                raise ConfigInvalid(f"{name} must be positive")
        for name in ("gamma1", "gamma2", "u_bar_floor"):
            if float(getattr(self, name)) < 0:
                raise ConfigInvalid(f"{name} must be >= 0")
        orders = tuple(int(o) for o in self.retained_orders)
        if not orders or any(o < 1 for o in orders):
            raise ConfigInvalid(f"retained_orders must be positive, got {orders}")
        object.__setattr__(self, "retained_orders", orders)
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigInvalid(f"unknown run-config keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("retained_orders", "x0"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return RunConfig(**kwargs)


def config_digest(cfg: RunConfig) -> str:
    """sha256 over the canonical JSON form; stable across sessions."""
    text = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ------------------------------------------------------------ design bundle

@dataclass(frozen=True)
class DesignBundle:
    """Output of the offline checklist; everything the online loop consumes."""

    model: InterconnectedModel
    reduced: ReducedModel
    slow: SlowModel
    slow_gain: GainDesign
    hl: HLDesign
    ll_gain: LLGain
    ll_Q: tuple
    ll_R: tuple
    radii: RadiusAllocation
    report: CertificateReport
    tube: RPIApproximation
    input_conservatism: float


def design_pipeline(model: InterconnectedModel, cfg: RunConfig) -> DesignBundle:
    """Run the offline checklist; raise DesignIncomplete naming the first
    failing stage so a misconfigured run is rejected before any simulation."""

    def stage(name):
        def wrap(fn):
            try:
                return fn()
            except HierMPCError as exc:
                raise DesignIncomplete(name, str(exc)) from exc
        return wrap

    def _reduction():
        reduced = reduce_model(model, cfg.retained_orders)
        check = verify_reduction(reduced, model)
        if not check.passed:
            raise HierMPCError(
                f"reduction checks failed (schur={check.schur_ok}, "
                f"full_rank={check.full_rank}, dc_residual={check.dc_residual:.3e})")
        return reduced

    reduced = stage("reduction")(_reduction)

    slow = stage("slow_gain")(lambda: lift(reduced, cfg.period))
    n_red, m = slow.n_states, slow.n_inputs
    Q_slow = cfg.q_slow * np.eye(n_red)
    R_slow = cfg.r_slow * np.eye(m)
    slow_gain = stage("slow_gain")(
        lambda: design_gain(slow, model, reduced, Q_slow, R_slow))

    ll_Q = tuple(cfg.q_fast * np.eye(sub.n_states) for sub in model.subsystems)
    ll_R = tuple(cfg.r_fast * np.eye(sub.n_inputs) for sub in model.subsystems)
    ll_gain = stage("fast_gain")(lambda: design_ll_gain(model, ll_Q, ll_R))

    radii = stage("radii")(
        lambda: tune_radii(model, reduced, ll_gain, cfg.period,
                           cfg.gamma1, cfg.gamma2, cfg.u_bar_floor))

    def _certificate():
        report = certificate_constants(model, reduced, ll_gain, radii,
                                       cfg.period, x0=np.asarray(cfg.x0))
        if not report.assumptions_ok:
            failing = [k for k, ok in report.clauses.items() if not ok]
            raise HierMPCError(f"certificate clauses failed: {failing}")
        return report

    report = stage("certificate")(_certificate)
    w_ball = stage("disturbance_set")(lambda: disturbance_set(reduced, report))
    tube = stage("tube")(lambda: rpi_outer(slow_gain.F_red, w_ball, cfg.rpi_tol))
    P = stage("terminal_cost")(
        lambda: terminal_cost(slow_gain.F_red, slow_gain.K, Q_slow, R_slow))

    def _input_tightening():
        # The held-input plan lives in one collective ball; the inscribed
        # radius of the per-subsystem budget product is the smallest budget.
        k_norm = float(np.linalg.norm(slow_gain.K, 2))
        tight = float(np.min(radii.rho_u_bar)) - k_norm * tube.ball.radius
        if tight <= 0:
            raise HierMPCError(
                f"held-input budget {float(np.min(radii.rho_u_bar)):.6g} cannot "
                f"absorb the tube feedback {k_norm * tube.ball.radius:.6g}")
        return BallSet(m, tight)

    input_tight = stage("input_tightening")(_input_tightening)
    terminal = stage("terminal_set")(
        lambda: terminal_set(slow_gain.F_red, P, slow_gain.K, input_tight))

    hl = HLDesign(slow_gain.K, slow_gain.F_red, slow_gain.F_full, P, tube.ball,
                  terminal, input_tight, Q_slow, R_slow, cfg.horizon)
    conservatism = float(np.max(radii.rho_u_bar) / np.min(radii.rho_u_bar))
    return DesignBundle(model, reduced, slow, slow_gain, hl, ll_gain, ll_Q,
                        ll_R, radii, report, tube, conservatism)


# ------------------------------------------------------------- trace layout

def fast_columns(n: int, m: int, n_sub: int) -> tuple:
    cols = ["h"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"xhat{i}" for i in range(n)]
    cols += [f"dx{i}" for i in range(n)]
    cols += [f"dxhat{i}" for i in range(n)]
    cols += [f"ubar{i}" for i in range(m)]
    cols += [f"duhat{i}" for i in range(m)]
    cols += [f"du{i}" for i in range(m)]
    cols += [f"u{i}" for i in range(m)]
    cols += [f"margin{i}" for i in range(n_sub)]
    return tuple(cols)


def slow_columns(n_red: int, m: int, horizon: int) -> tuple:
    cols = ["k"]
    cols += [f"xproj{i}" for i in range(n_red)]
    cols += [f"xnom{i}" for i in range(n_red)]
    cols += [f"xnext{i}" for i in range(n_red)]
    cols += [f"ubar{i}" for i in range(m)]
    cols += [f"useq{s}_{i}" for s in range(horizon) for i in range(m)]
    cols += ["objective", "iterations", "primal_residual", "dual_residual"]
    cols += [f"wbar{i}" for i in range(n_red)]
    cols += ["tube_error"]
    return tuple(cols)


@dataclass(frozen=True)
class TraceArchive:
    """One closed-loop run: per-rate records plus the design context."""

    config: RunConfig
    fast_cols: tuple
    slow_cols: tuple
    fast: np.ndarray
    slow: np.ndarray
    final_state: np.ndarray
    wall_clock: float

    def fast_col(self, name: str) -> np.ndarray:
        return self.fast[:, self.fast_cols.index(name)]

    def slow_col(self, name: str) -> np.ndarray:
        return self.slow[:, self.slow_cols.index(name)]

    def fast_block(self, prefix: str, count: int) -> np.ndarray:
        start = self.fast_cols.index(f"{prefix}0")
        return self.fast[:, start:start + count]

    def slow_block(self, prefix: str, count: int) -> np.ndarray:
        start = self.slow_cols.index(f"{prefix}0")
        return self.slow[:, start:start + count]


# ---------------------------------------------------------------- run loop

def run_closed_loop(model: InterconnectedModel, cfg: RunConfig,
                    bundle: DesignBundle | None = None) -> TraceArchive:
    """Execute the two-rate loop for `cfg.n_slow_steps` slow steps.

    Any slow- or fast-layer infeasibility aborts the run with the slow-step
    index attached to the exception diagnostics; nothing is clipped.
    """
    start = time.perf_counter()
    if bundle is None:
        bundle = design_pipeline(model, cfg)
    reduced, slow, hl = bundle.reduced, bundle.slow, bundle.hl
    N, M = cfg.period, model.n_subsystems
    n, m = model.n_states, model.n_inputs

    x = np.asarray(cfg.x0, dtype=float)
    if x.shape != (n,):
        raise ConfigInvalid(f"x0 must have length {n}, got {x.shape}")
    rho_u = model.input_radii()

    f_cols = fast_columns(n, m, M)
    s_cols = slow_columns(reduced.n_states, m, cfg.horizon)
    fast_rows = np.empty((cfg.n_slow_steps * N, len(f_cols)))
    slow_rows = np.empty((cfg.n_slow_steps, len(s_cols)))

    for k in range(cfg.n_slow_steps):
        x_proj = reduced.beta @ x
        try:
            sol = solve_hl(hl, slow, x_proj, cfg.tol_primal, cfg.tol_dual,
                           cfg.max_iters, first_step=(k == 0))
        except InfeasibleHL as exc:
            exc.diagnostics["slow_step"] = k
            raise
        u_bar = sol.u_applied
        x_bar_pred = slow.A @ x_proj + slow.B @ u_bar
        aux = simulate_auxiliary(model, x, u_bar, N)

        plans = []
        for i in range(M):
            budget = BallSet(model.subsystems[i].n_inputs,
                             float(bundle.radii.rho_delta_u_hat[i]))
            try:
                plans.append(solve_ll(
                    model, reduced, i, x_bar_pred[reduced.block_slice(i)],
                    aux.terminal, budget, bundle.ll_Q[i], bundle.ll_R[i], N,
                    cfg.tol_primal, cfg.tol_dual, cfg.max_iters))
            except InfeasibleLL as exc:
                exc.diagnostics["slow_step"] = k
                raise

        x_cur = x
        for j in range(N):
            dx = x_cur - aux.states[j]
            duhat = np.empty(m)
            du = np.empty(m)
            dxhat = np.empty(n)
            for i in range(M):
                su, sx = model.input_slice(i), model.state_slice(i)
                duhat[su] = plans[i].u_steps[j]
                dxhat[sx] = plans[i].states[j]
                du[su] = apply_correction(plans[i], bundle.ll_gain.blocks[i],
                                          dx[sx], j)
            u = u_bar + du
            margins = np.array([rho_u[i] - np.linalg.norm(u[model.input_slice(i)])
                                for i in range(M)])
            fast_rows[k * N + j] = np.concatenate(
                [[k * N + j], x_cur, aux.states[j], dx, dxhat, u_bar, duhat,
                 du, u, margins])
            x_cur = model.A @ x_cur + model.B @ u

        w_bar = reduced.beta @ x_cur - x_bar_pred
        tube_err = float(np.linalg.norm(x_proj - sol.x_nominal))
        slow_rows[k] = np.concatenate(
            [[k], x_proj, sol.x_nominal, sol.x_nominal_next, u_bar,
             sol.u_nominal_seq.ravel(),
             [sol.objective, float(sol.iterations), sol.primal_residual,
              sol.dual_residual], w_bar, [tube_err]])
        x = x_cur

    wall = time.perf_counter() - start
    return TraceArchive(cfg, f_cols, s_cols, fast_rows, slow_rows, x, wall)


# ------------------------------------------------------------ serialization

def _mat(value) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(np.asarray(value, dtype=float))]


def _vec(value) -> list:
    return [float(v) for v in np.asarray(value, dtype=float).ravel()]


def report_to_dict(report: CertificateReport) -> dict:
    return {
        "period": report.period,
        "kappa": report.kappa,
        "kappa_bound": report.kappa_bound,
        "defect_norm": report.defect_norm,
        "reach_norm": report.reach_norm,
        "al_power_norm": report.al_power_norm,
        "sigma": _vec(report.sigma),
        "chi": _vec(report.chi),
        "lambda_margins": _vec(report.lambda_margins),
        "rho_w": report.rho_w,
        "rho_x": report.rho_x,
        "delta_state_table": _mat(report.delta_state_table),
        "delta_input_table": _mat(report.delta_input_table),
        "clauses": {k: bool(v) for k, v in report.clauses.items()},
        "radii": {
            "rho_delta_u_hat": _vec(report.radii.rho_delta_u_hat),
            "rho_u_bar": _vec(report.radii.rho_u_bar),
            "objective": report.radii.objective,
            "gamma1": report.radii.gamma1,
            "gamma2": report.radii.gamma2,
            "slack": report.radii.slack,
        },
        "x0_bound_ok": report.x0_bound_ok,
    }


def report_from_dict(data: dict) -> CertificateReport:
    radii = RadiusAllocation(
        np.array(data["radii"]["rho_delta_u_hat"], dtype=float),
        np.array(data["radii"]["rho_u_bar"], dtype=float),
        float(data["radii"]["objective"]),
        float(data["radii"]["gamma1"]),
        float(data["radii"]["gamma2"]),
        float(data["radii"]["slack"]))
    return CertificateReport(
        int(data["period"]), float(data["kappa"]), float(data["kappa_bound"]),
        float(data["defect_norm"]), float(data["reach_norm"]),
        float(data["al_power_norm"]),
        np.array(data["sigma"], dtype=float), np.array(data["chi"], dtype=float),
        np.array(data["lambda_margins"], dtype=float),
        float(data["rho_w"]), float(data["rho_x"]),
        np.array(data["delta_state_table"], dtype=float),
        np.array(data["delta_input_table"], dtype=float),
        dict(data["clauses"]), radii, data.get("x0_bound_ok"))


def design_to_dict(bundle: DesignBundle) -> dict:
    hl = bundle.hl
    return {
        "reduced": {
            "A": _mat(bundle.reduced.A), "B": _mat(bundle.reduced.B),
            "beta": _mat(bundle.reduced.beta),
            "orders": list(bundle.reduced.orders),
            "offsets": list(bundle.reduced.offsets),
        },
        "slow": {"A": _mat(bundle.slow.A), "B": _mat(bundle.slow.B),
                 "period": bundle.slow.period},
        "slow_gain": {
            "K": _mat(bundle.slow_gain.K), "F_red": _mat(bundle.slow_gain.F_red),
            "F_full": _mat(bundle.slow_gain.F_full),
            "rho_red": bundle.slow_gain.rho_red,
            "rho_full": bundle.slow_gain.rho_full,
            "rounds": bundle.slow_gain.rounds,
            "R_final": _mat(bundle.slow_gain.R_final),
        },
        "hl": {
            "P": _mat(hl.P), "tube_radius": hl.tube.radius,
            "terminal_shape": _mat(hl.terminal.shape),
            "terminal_level": hl.terminal.level,
            "input_tight_radius": hl.input_tight.radius,
            "Q": _mat(hl.Q), "R": _mat(hl.R), "horizon": hl.horizon,
        },
        "ll_gain": {"blocks": [_mat(blk) for blk in bundle.ll_gain.blocks],
                    "rho": bundle.ll_gain.rho, "rounds": bundle.ll_gain.rounds},
        "ll_weights": {"Q": [_mat(Q) for Q in bundle.ll_Q],
                       "R": [_mat(R) for R in bundle.ll_R]},
        "tube": {"radius": bundle.tube.ball.radius,
                 "horizon_terms": bundle.tube.horizon_terms,
                 "contraction": bundle.tube.contraction,
                 "certificate_gap": bundle.tube.certificate_gap},
        "input_conservatism": bundle.input_conservatism,
    }


def design_from_dict(data: dict, model: InterconnectedModel,
                     report: CertificateReport) -> DesignBundle:
    import scipy.linalg

    red = data["reduced"]
    reduced = ReducedModel(np.array(red["A"], dtype=float),
                           np.array(red["B"], dtype=float),
                           np.array(red["beta"], dtype=float),
                           tuple(int(o) for o in red["orders"]),
                           tuple(int(o) for o in red["offsets"]))
    slow = SlowModel(np.array(data["slow"]["A"], dtype=float),
                     np.array(data["slow"]["B"], dtype=float),
                     int(data["slow"]["period"]))
    sg = data["slow_gain"]
    slow_gain = GainDesign(np.array(sg["K"], dtype=float),
                           np.array(sg["F_red"], dtype=float),
                           np.array(sg["F_full"], dtype=float),
                           float(sg["rho_red"]), float(sg["rho_full"]),
                           int(sg["rounds"]), np.array(sg["R_final"], dtype=float))
    blocks = tuple(np.array(blk, dtype=float) for blk in data["ll_gain"]["blocks"])
    K_ll = scipy.linalg.block_diag(*blocks)
    ll_gain = LLGain(blocks, K_ll, model.A + model.B @ K_ll,
                     float(data["ll_gain"]["rho"]), int(data["ll_gain"]["rounds"]))
    hl_d = data["hl"]
    hl = HLDesign(slow_gain.K, slow_gain.F_red, slow_gain.F_full,
                  np.array(hl_d["P"], dtype=float),
                  BallSet(reduced.n_states, float(hl_d["tube_radius"])),
                  EllipsoidSet(np.array(hl_d["terminal_shape"], dtype=float),
                               float(hl_d["terminal_level"])),
                  BallSet(slow.n_inputs, float(hl_d["input_tight_radius"])),
                  np.array(hl_d["Q"], dtype=float),
                  np.array(hl_d["R"], dtype=float), int(hl_d["horizon"]))
    ll_Q = tuple(np.array(Q, dtype=float) for Q in data["ll_weights"]["Q"])
    ll_R = tuple(np.array(R, dtype=float) for R in data["ll_weights"]["R"])
    tube = RPIApproximation(BallSet(reduced.n_states, float(data["tube"]["radius"])),
                            int(data["tube"]["horizon_terms"]),
                            float(data["tube"]["contraction"]),
                            float(data["tube"]["certificate_gap"]))
    return DesignBundle(model, reduced, slow, slow_gain, hl, ll_gain, ll_Q,
                        ll_R, report.radii, report, tube,
                        float(data["input_conservatism"]))
