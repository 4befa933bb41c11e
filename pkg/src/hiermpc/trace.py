"""Trace archive persistence and post-hoc invariant verification.

An archive directory holds one CSV per rate (`fast.csv`, `slow.csv`), the
model, the run config, the design, the certificate, and a metadata file.
Floats are written with repr, the shortest decimal string that round-trips
to the same binary value, so every file except `metadata.json` is a pure
function of config and seed; `metadata.json` records wall clock and is the
only file excluded from the determinism digest.

`verify_archive` re-derives every runtime invariant from the recorded data:
state transitions against the model, input limits, correction budgets, the
slow-step disturbance bound, tube containment, nominal convergence, and the
closed-loop norm-tail envelope.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (DesignBundle, RunConfig, TraceArchive, config_digest,
                      config_from_dict, config_to_dict, design_from_dict,
                      design_to_dict, report_from_dict, report_to_dict)
from .highlevel import lifted_input_matrix
from .lti import InterconnectedModel
from .model_io import load_model, save_model

ARCHIVE_VERSION = 1
FAST_SCHEMA = "hiermpc.trace.fast.v1"
SLOW_SCHEMA = "hiermpc.trace.slow.v1"
_DETERMINISTIC_FILES = ("model.json", "config.json", "design.json",
                        "certificate.json", "fast.csv", "slow.csv")


def _write_csv(path: Path, schema: str, columns, rows: np.ndarray) -> None:
    lines = [f"# schema={schema} columns={len(columns)} rows={rows.shape[0]}"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_csv(path: Path, schema: str):
    lines = path.read_text().splitlines()
    header = lines[0]
    if not header.startswith(f"# schema={schema} "):
        raise ValueError(f"{path.name}: expected schema {schema}, got {header!r}")
    columns = tuple(lines[1].split(","))
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
    if rows.size == 0:
        rows = rows.reshape(0, len(columns))
    return columns, rows


def write_archive(archive: TraceArchive, bundle: DesignBundle, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(bundle.model, out / "model.json")
    (out / "config.json").write_text(
        json.dumps(config_to_dict(archive.config), indent=1))
    (out / "design.json").write_text(json.dumps(design_to_dict(bundle), indent=1))
    (out / "certificate.json").write_text(
        json.dumps(report_to_dict(bundle.report), indent=1))
    _write_csv(out / "fast.csv", FAST_SCHEMA, archive.fast_cols, archive.fast)
    _write_csv(out / "slow.csv", SLOW_SCHEMA, archive.slow_cols, archive.slow)
    meta = {
        "archive_version": ARCHIVE_VERSION,
        "package_version": __version__,
        "config_sha256": config_digest(archive.config),
        "wall_clock_s": archive.wall_clock,
        "created_unix": time.time(),
        "final_state": [float(v) for v in archive.final_state],
        "n_slow_steps": archive.config.n_slow_steps,
        "period": archive.config.period,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=1))
    return out


@dataclass(frozen=True)
class LoadedArchive:
    config: RunConfig
    model: InterconnectedModel
    bundle: DesignBundle
    fast_cols: tuple
    slow_cols: tuple
    fast: np.ndarray
    slow: np.ndarray
    metadata: dict

    @property
    def final_state(self) -> np.ndarray:
        return np.array(self.metadata["final_state"], dtype=float)


def load_archive(path) -> LoadedArchive:
    root = Path(path)
    config = config_from_dict(json.loads((root / "config.json").read_text()))
    model = load_model(root / "model.json")
    report = report_from_dict(json.loads((root / "certificate.json").read_text()))
    bundle = design_from_dict(json.loads((root / "design.json").read_text()),
                              model, report)
    fast_cols, fast = _read_csv(root / "fast.csv", FAST_SCHEMA)
    slow_cols, slow = _read_csv(root / "slow.csv", SLOW_SCHEMA)
    metadata = json.loads((root / "metadata.json").read_text())
    return LoadedArchive(config, model, bundle, fast_cols, slow_cols, fast,
                         slow, metadata)


def archive_digest(path) -> str:
    """sha256 over every deterministic archive file; excludes metadata.json."""
    root = Path(path)
    digest = hashlib.sha256()
    for name in _DETERMINISTIC_FILES:
        digest.update(name.encode())
        digest.update((root / name).read_bytes())
    return digest.hexdigest()


# ------------------------------------------------------------- verification

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class VerifyReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{width}}  {'worst':>13}  {'threshold':>13}  result"]
        for c in self.checks:
            verdict = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {c.worst:>13.6e}  "
                         f"{c.threshold:>13.6e}  {verdict}"
                         + (f"  ({c.detail})" if c.detail else ""))
        return "\n".join(lines)


def _col(cols: tuple, rows: np.ndarray, name: str) -> np.ndarray:
    return rows[:, cols.index(name)]


def _block(cols: tuple, rows: np.ndarray, prefix: str, count: int) -> np.ndarray:
    start = cols.index(f"{prefix}0")
    return rows[:, start:start + count]


def verify_archive(path) -> VerifyReport:
    """Re-check every runtime invariant of a stored run from first
    principles: nothing recorded is trusted except the raw states, inputs
    and the design constants, all of which are recomputed against each
    other.

    The convergence checks (nominal settling, norm-tail envelope) hold for
    runs of the certified scenario length; archives cut short before the
    nominal settles fail `nominal_convergence` by construction."""
    arc = load_archive(path)
    model, bundle, cfg = arc.model, arc.bundle, arc.config
    n, m, M = model.n_states, model.n_inputs, model.n_subsystems
    N, n_red = cfg.period, bundle.reduced.n_states
    checks = []

    def add(name, worst, threshold, detail="", larger_ok=False):
        ok = worst >= threshold if larger_ok else worst <= threshold
        checks.append(CheckResult(name, bool(ok), float(worst),
                                  float(threshold), detail))

    # Record counts against the configured horizons.
    count_err = abs(arc.fast.shape[0] - cfg.n_slow_steps * N) \
        + abs(arc.slow.shape[0] - cfg.n_slow_steps)
    add("record_counts", count_err, 0, f"{arc.fast.shape[0]} fast, "
        f"{arc.slow.shape[0]} slow rows")

    # Stored hash vs the loaded config.
    hash_ok = arc.metadata.get("config_sha256") == config_digest(cfg)
    add("config_hash", 0.0 if hash_ok else 1.0, 0)

    x = _block(arc.fast_cols, arc.fast, "x", n)
    u = _block(arc.fast_cols, arc.fast, "u", m)
    ubar_f = _block(arc.fast_cols, arc.fast, "ubar", m)
    du = _block(arc.fast_cols, arc.fast, "du", m)
    duhat = _block(arc.fast_cols, arc.fast, "duhat", m)
    states_next = np.vstack([x[1:], arc.final_state[None, :]])

    # Every recorded transition must be reproduced by the model.
    residual = states_next - x @ model.A.T - u @ model.B.T
    add("transition_residual", float(np.max(np.abs(residual))), 1e-9)

    # Input composition and hard limits.
    comp = float(np.max(np.abs(u - ubar_f - du)))
    add("input_composition", comp, 1e-12)
    rho_u = model.input_radii()
    worst_margin = min(
        float(np.min(rho_u[i] - np.linalg.norm(
            u[:, model.input_slice(i)], axis=1))) for i in range(M))
    add("input_limits", worst_margin, -1e-9, larger_ok=True)

    # Planned corrections inside their allocated budgets.
    budget_excess = max(
        float(np.max(np.linalg.norm(duhat[:, model.input_slice(i)], axis=1)
                     - bundle.radii.rho_delta_u_hat[i])) for i in range(M))
    add("correction_budgets", budget_excess, 1e-8)

    # Slow-step disturbance: recompute from boundary states and held inputs.
    beta = bundle.reduced.beta
    xk = np.vstack([x[::N], arc.final_state[None, :]])  # slow boundary states
    proj = xk @ beta.T
    ubar_s = _block(arc.slow_cols, arc.slow, "ubar", m)
    w_meas = proj[1:] - proj[:-1] @ bundle.slow.A.T - ubar_s @ bundle.slow.B.T
    w_rec = _block(arc.slow_cols, arc.slow, "wbar", n_red)
    add("disturbance_record", float(np.max(np.abs(w_meas - w_rec))), 1e-9)
    add("disturbance_bound",
        float(np.max(np.linalg.norm(w_meas, axis=1))),
        bundle.report.rho_w + 1e-12)

    # Projection consistency and tube containment at every slow tick.
    xproj_rec = _block(arc.slow_cols, arc.slow, "xproj", n_red)
    add("projection_record", float(np.max(np.abs(proj[:-1] - xproj_rec))), 1e-12)
    xnom = _block(arc.slow_cols, arc.slow, "xnom", n_red)
    tube_err = np.linalg.norm(xproj_rec - xnom, axis=1)
    add("tube_containment", float(np.max(tube_err)),
        bundle.hl.tube.radius + 1e-7)

    # Nominal plan internally consistent: xnext = A xnom + B useq[0].
    xnext = _block(arc.slow_cols, arc.slow, "xnext", n_red)
    useq0 = _block(arc.slow_cols, arc.slow, "useq0_", m)
    plan_res = xnext - xnom @ bundle.slow.A.T - useq0 @ bundle.slow.B.T
    add("nominal_plan_residual", float(np.max(np.abs(plan_res))), 1e-7)

    # Nominal convergence to the origin within the run.  Meaningful for
    # archives covering the certified scenario length; an exploratory run cut
    # short before the nominal settles reports this as a failure.
    nom_norms = np.linalg.norm(xnom, axis=1)
    hit = np.flatnonzero(nom_norms <= 1e-6)
    detail = f"reached at slow step {hit[0]}" if hit.size else "never reached"
    add("nominal_convergence", float(np.min(nom_norms)), 1e-6, detail)

    # Closed-loop norm-tail envelope at the slow boundaries: the loop matrix
    # is the lifted closed loop, forced by the nominal feedforward and the
    # certified correction radius.
    F = bundle.slow_gain.F_full
    B_lift = lifted_input_matrix(model.A, model.B, N)
    K_steps = cfg.n_slow_steps
    pow_norms = np.empty(K_steps + 1)
    P_ = np.eye(n)
    for k in range(K_steps + 1):
        pow_norms[k] = np.linalg.norm(P_, 2)
        P_ = F @ P_
    forcing = np.linalg.norm(
        (useq0 - xnom @ bundle.slow_gain.K.T) @ B_lift.T, axis=1) \
        + bundle.report.rho_x
    x0_norm = float(np.linalg.norm(xk[0]))
    worst_gap = -np.inf
    for k in range(K_steps + 1):
        env = pow_norms[k] * x0_norm
        if k:
            env += float(np.dot(pow_norms[k - 1::-1][:k], forcing[:k]))
        worst_gap = max(worst_gap, float(np.linalg.norm(xk[k]) - env))
    add("tail_envelope", worst_gap, 1e-9, detail="state norm minus envelope")

    return VerifyReport(tuple(checks))
