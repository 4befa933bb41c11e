"""Interconnected discrete-time LTI models.

A plant is a set of subsystems
    x_i(h+1) = A_ii x_i(h) + B_ii u_i(h) + E_i s_i(h)
coupled through outputs z_j = C_zj x_j and s_i = sum_j L_ij z_j with zero
self-coupling.  `assemble` builds the collective matrices; everything
downstream (reduction, gain design, analysis) works on both views.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonzeroSelfCoupling, NotSchur
from .sets import BallSet


def _as_matrix(value, rows: int | None = None, cols: int | None = None,
               name: str = "matrix") -> np.ndarray:
    out = np.atleast_2d(np.asarray(value, dtype=float))
    if rows is not None and out.shape[0] != rows:
        raise DimensionMismatch(f"{name}: expected {rows} rows, got {out.shape[0]}")
    if cols is not None and out.shape[1] != cols:
        raise DimensionMismatch(f"{name}: expected {cols} columns, got {out.shape[1]}")
    return out


@dataclass(frozen=True)
class SubsystemModel:
    """One subsystem: local dynamics, coupling input/output maps, input set."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C_z: np.ndarray
    input_set: BallSet

    def __post_init__(self):
        A = _as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = _as_matrix(self.B, rows=n, name="B")
        E = _as_matrix(self.E, rows=n, name="E")
        C_z = _as_matrix(self.C_z, cols=n, name="C_z")
        if self.input_set.dim != B.shape[1]:
            raise DimensionMismatch(
                f"input set dimension {self.input_set.dim} != input count {B.shape[1]}")
        for attr, value in (("A", A), ("B", B), ("E", E), ("C_z", C_z)):
            object.__setattr__(self, attr, value)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_coupling_in(self) -> int:
        return self.E.shape[1]

    @property
    def n_coupling_out(self) -> int:
        return self.C_z.shape[0]


@dataclass(frozen=True)
class CouplingMap:
    """Block matrix L: blocks[i][j] multiplies subsystem j's coupling output.

    Diagonal blocks must be zero (no self-coupling through the network).
    """

    blocks: tuple

    def __post_init__(self):
        rows = tuple(tuple(None if blk is None else np.atleast_2d(np.asarray(blk, dtype=float))
                           for blk in row) for row in self.blocks)
        m = len(rows)
        for row in rows:
            if len(row) != m:
                raise DimensionMismatch("coupling blocks must form a square grid")
        for i in range(m):
            blk = rows[i][i]
            if blk is not None and float(np.max(np.abs(blk))) > 0.0:
                raise NonzeroSelfCoupling(f"self-coupling block ({i},{i}) must be zero")
        object.__setattr__(self, "blocks", rows)

    @property
    def n_subsystems(self) -> int:
        return len(self.blocks)

    def block(self, i: int, j: int) -> np.ndarray | None:
        return self.blocks[i][j]


@dataclass(frozen=True)
class InterconnectedModel:
    """Assembled collective model with per-subsystem block bookkeeping."""

    subsystems: tuple
    coupling: CouplingMap
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    state_offsets: tuple
    input_offsets: tuple

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystems)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    def state_slice(self, i: int) -> slice:
        return slice(self.state_offsets[i], self.state_offsets[i + 1])

    def input_slice(self, i: int) -> slice:
        return slice(self.input_offsets[i], self.input_offsets[i + 1])

    def state_selector(self, i: int) -> np.ndarray:
        """Selector S_i with x_i = S_i x."""
        S = np.zeros((self.subsystems[i].n_states, self.n_states))
        S[:, self.state_slice(i)] = np.eye(self.subsystems[i].n_states)
        return S

    def block_diagonal_A(self) -> np.ndarray:
        """Collective A with every cross block zeroed."""
        out = np.zeros_like(self.A)
        for i, sub in enumerate(self.subsystems):
            sl = self.state_slice(i)
            out[sl, sl] = sub.A
        return out

    def input_radii(self) -> np.ndarray:
        return np.array([sub.input_set.radius for sub in self.subsystems])


@dataclass(frozen=True)
class StateTrajectory:
    """Sampled trajectory; states has one more row than inputs."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        times = np.asarray(self.times)
        if states.shape[0] != inputs.shape[0] + 1:
            raise DimensionMismatch("need exactly one more state sample than input sample")
        if times.shape[0] != states.shape[0]:
            raise DimensionMismatch("times must align with state samples")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "times", times)

    def dynamics_residual(self, model: InterconnectedModel) -> float:
        pred = self.states[:-1] @ model.A.T + self.inputs @ model.B.T
        return float(np.max(np.abs(pred - self.states[1:]))) if len(self.inputs) else 0.0


@dataclass(frozen=True)
class ModelValidation:
    spectral_radius: float
    schur_ok: bool
    reachability_ranks: tuple
    reachable: bool
    subsystem_eigenvalues: tuple

    @property
    def passed(self) -> bool:
        return self.schur_ok and self.reachable


def assemble(subsystems, coupling: CouplingMap) -> InterconnectedModel:
    """Build the collective (A, B) from subsystem data and the coupling map.

    Cross blocks are A_ij = E_i L_ij C_zj; B is block diagonal.
    """
    subsystems = tuple(subsystems)
    m = len(subsystems)
    if coupling.n_subsystems != m:
        raise DimensionMismatch(
            f"coupling grid is {coupling.n_subsystems}x{coupling.n_subsystems}, "
            f"model has {m} subsystems")
    state_offsets = np.concatenate([[0], np.cumsum([s.n_states for s in subsystems])])
    input_offsets = np.concatenate([[0], np.cumsum([s.n_inputs for s in subsystems])])
    n = int(state_offsets[-1])
    p = int(input_offsets[-1])
    A = np.zeros((n, n))
    B = np.zeros((n, p))
    for i, sub in enumerate(subsystems):
        si = slice(state_offsets[i], state_offsets[i + 1])
        A[si, si] = sub.A
        B[si, input_offsets[i]:input_offsets[i + 1]] = sub.B
        for j, other in enumerate(subsystems):
            if j == i:
                continue
            blk = coupling.block(i, j)
            if blk is None:
                continue
            if blk.shape != (sub.n_coupling_in, other.n_coupling_out):
                raise DimensionMismatch(
                    f"coupling block ({i},{j}) has shape {blk.shape}, expected "
                    f"({sub.n_coupling_in},{other.n_coupling_out})")
            sj = slice(state_offsets[j], state_offsets[j + 1])
            A[si, sj] = sub.E @ blk @ other.C_z
    return InterconnectedModel(subsystems, coupling, A, B,
                               tuple(int(v) for v in state_offsets),
                               tuple(int(v) for v in input_offsets))


def reachability_matrix(A: np.ndarray, B: np.ndarray, steps: int | None = None) -> np.ndarray:
    """[B, AB, ..., A^{steps-1}B]; defaults to the state dimension."""
    n = A.shape[0]
    steps = n if steps is None else steps
    blocks = []
    term = B
    for _ in range(steps):
        blocks.append(term)
        term = A @ term
    return np.hstack(blocks)


def validate_model(model: InterconnectedModel, schur_margin: float = 1e-9,
                   rank_tol: float = 1e-10, strict: bool = False) -> ModelValidation:
    """Check collective stability and per-subsystem reachability.

    With strict=True a failing check raises NotSchur / DimensionMismatch
    instead of returning a failing report.
    """
    eigvals = np.linalg.eigvals(model.A)
    spectral_radius = float(np.max(np.abs(eigvals)))
    schur_ok = spectral_radius < 1.0 - schur_margin
    ranks = []
    sub_eigs = []
    for sub in model.subsystems:
        R = reachability_matrix(sub.A, sub.B)
        sv = np.linalg.svd(R, compute_uv=False)
        scale = sv[0] if sv.size and sv[0] > 0 else 1.0
        ranks.append(int(np.sum(sv > rank_tol * max(1.0, scale))))
        sub_eigs.append(tuple(sorted(np.linalg.eigvals(sub.A).tolist(),
                                     key=lambda v: (-abs(v), -v.real))))
    reachable = all(r == sub.n_states for r, sub in zip(ranks, model.subsystems))
    report = ModelValidation(spectral_radius, schur_ok, tuple(ranks), reachable,
                             tuple(sub_eigs))
    if strict and not report.passed:
        if not schur_ok:
            raise NotSchur(
                f"collective spectral radius {spectral_radius:.9f} >= 1 - {schur_margin}")
        raise NotSchur(f"subsystem reachability ranks {ranks} below state dimensions")
    return report


def step(model: InterconnectedModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n_states,):
        raise DimensionMismatch(f"state must have length {model.n_states}, got {x.shape}")
    if u.shape != (model.n_inputs,):
        raise DimensionMismatch(f"input must have length {model.n_inputs}, got {u.shape}")
    return model.A @ x + model.B @ u


def simulate(model: InterconnectedModel, x0: np.ndarray, inputs: np.ndarray,
             t0: int = 0) -> StateTrajectory:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    states = np.empty((inputs.shape[0] + 1, model.n_states))
    states[0] = np.asarray(x0, dtype=float)
    for h, u in enumerate(inputs):
        states[h + 1] = step(model, states[h], u)
    times = np.arange(t0, t0 + states.shape[0])
    return StateTrajectory(times, states, inputs)
