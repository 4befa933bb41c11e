"""In-house convex solvers: operator-splitting QP and dense simplex LP.

The QP path is ADMM with exact equality handling: equalities live inside the
x-update KKT system (factored once per penalty value), set memberships are
enforced by Euclidean projection in the z-update.  Consequences that the
controllers rely on:

  * every returned iterate satisfies A_eq x = b_eq to linear-solver accuracy,
  * set constraints are satisfied to tol_primal at termination,
  * the iterate sequence is a deterministic function of (problem, start).

The LP path is a two-phase tableau simplex with Bland's rule, plus an
optional constraint-pinning pass that selects the lexicographically smallest
optimizer when the optimal face is not a single vertex.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, UnboundedProblem


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class BallConstraint:
    """||x[indices] - center|| <= radius."""

    indices: np.ndarray
    radius: float
    center: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        object.__setattr__(self, "indices", idx)
        if self.center is not None:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (idx.size,):
                raise DimensionMismatch("ball center length must match index count")
            object.__setattr__(self, "center", c)
        if self.radius < 0:
            raise DimensionMismatch("ball radius must be >= 0")

    def project(self, v: np.ndarray) -> np.ndarray:
        c = self.center if self.center is not None else 0.0
        d = v - c
        norm = float(np.linalg.norm(d))
        if norm <= self.radius:
            return v
        if norm == 0.0:
            return np.asarray(c, dtype=float) + np.zeros_like(v)
        return c + d * (self.radius / norm)

    def violation(self, v: np.ndarray) -> float:
        c = self.center if self.center is not None else 0.0
        return max(0.0, float(np.linalg.norm(v - c)) - self.radius)


@dataclass(frozen=True)
class BoxConstraint:
    """lower <= x[indices] <= upper componentwise."""

    indices: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (idx.size,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (idx.size,)).copy()
        if np.any(lo > hi):
            raise DimensionMismatch("box lower bound exceeds upper bound")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def violation(self, v: np.ndarray) -> float:
        return float(np.max(np.maximum(self.lower - v, v - self.upper), initial=0.0))


@dataclass(frozen=True)
class EllipsoidConstraint:
    """(x[indices] - center)' shape (x[indices] - center) <= level."""

    indices: np.ndarray
    shape: np.ndarray
    level: float
    center: np.ndarray | None = None
    _eigvals: np.ndarray = field(init=False, repr=False, compare=False)
    _eigvecs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        P = np.atleast_2d(np.asarray(self.shape, dtype=float))
        if P.shape != (idx.size, idx.size):
            raise DimensionMismatch("ellipsoid shape must match index count")
        if self.level < 0:
            raise DimensionMismatch("ellipsoid level must be >= 0")
        lam, V = np.linalg.eigh(0.5 * (P + P.T))
        if lam[0] <= 0:
            raise DimensionMismatch("ellipsoid shape must be positive definite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "shape", P)
        object.__setattr__(self, "_eigvals", lam)
        object.__setattr__(self, "_eigvecs", V)
        if self.center is not None:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (idx.size,):
                raise DimensionMismatch("ellipsoid center length must match index count")
            object.__setattr__(self, "center", c)

    def project(self, v: np.ndarray, newton_tol: float = 1e-12) -> np.ndarray:
        c = self.center if self.center is not None else np.zeros(self.indices.size)
        d = v - c
        value = float(d @ self.shape @ d)
        if value <= self.level:
            return v
        if self.level == 0.0:
            return np.array(c, dtype=float)
        # Projection solves y = (I + mu P)^{-1} d with mu > 0 the root of
        # phi(mu) = y' P y - level, found by safeguarded Newton in the
        # eigenbasis of P.
        lam, V = self._eigvals, self._eigvecs
        w = V.T @ d
        lw2 = lam * w * w

        def phi(mu):
            denom = 1.0 + mu * lam
            return float(np.sum(lw2 / (denom * denom))) - self.level

        def dphi(mu):
            denom = 1.0 + mu * lam
            return float(-2.0 * np.sum(lam * lw2 / (denom * denom * denom)))

        mu = 0.0
        hi = 1.0 / lam[0]
        while phi(hi) > 0:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            f = phi(mu)
            if abs(f) <= newton_tol * max(self.level, 1.0):
                break
            if f > 0:
                lo = mu
            else:
                hi = mu
            step_mu = mu - f / dphi(mu)
            mu = step_mu if lo < step_mu < hi else 0.5 * (lo + hi)
        y = (V @ (w / (1.0 + mu * lam)))
        return c + y

    def violation(self, v: np.ndarray) -> float:
        c = self.center if self.center is not None else 0.0
        d = v - c
        value = float(d @ self.shape @ d)
        if value <= self.level:
            return 0.0
        # Report in distance units, consistent with the other families.
        return float(np.linalg.norm(v - self.project(v)))


SetConstraint = BallConstraint | BoxConstraint | EllipsoidConstraint


@dataclass(frozen=True)
class QuadraticProgram:
    """min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq, x[S_c] in C_c for each c."""

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    constraints: tuple = ()

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.asarray(self.g, dtype=float)
        d = g.shape[0]
        if H.shape != (d, d):
            raise DimensionMismatch(f"H must be {d}x{d}, got {H.shape}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        if (self.A_eq is None) != (self.b_eq is None):
            raise DimensionMismatch("A_eq and b_eq must be given together")
        if self.A_eq is not None:
            A = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            b = np.asarray(self.b_eq, dtype=float)
            if A.shape[1] != d or A.shape[0] != b.shape[0]:
                raise DimensionMismatch("equality constraint dimensions inconsistent")
            object.__setattr__(self, "A_eq", A)
            object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def dim(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    objective: float
    status: Status
    primal_residual: float
    dual_residual: float
    iterations: int


def _kkt_factor(H_aug: np.ndarray, A_eq: np.ndarray | None):
    if A_eq is None:
        return scipy.linalg.lu_factor(H_aug), 0
    r = A_eq.shape[0]
    d = H_aug.shape[0]
    K = np.zeros((d + r, d + r))
    K[:d, :d] = H_aug
    K[:d, d:] = A_eq.T
    K[d:, :d] = A_eq
    return scipy.linalg.lu_factor(K), r


def solve_qp(problem: QuadraticProgram,
             tol_primal: float = 1e-8,
             tol_dual: float = 1e-8,
             max_iters: int = 50_000,
             over_relaxation: float = 1.6,
             x0: np.ndarray | None = None,
             z0: list | None = None,
             u0: list | None = None) -> SolveResult:
    """ADMM solve; see module docstring for the splitting and its guarantees.

    Infeasibility is declared when the iterate displacement settles on a
    nonzero direction while residuals stay above 1e3*tol for 500 consecutive
    iterations (the standard divergence certificate for splitting methods).
    """
    d = problem.dim
    cons = problem.constraints
    diag_scale = float(np.mean(np.abs(np.diag(problem.H))))
    rho = diag_scale if diag_scale > 0 else 1.0
    rho_init = rho

    if not cons:
        factor, r = _kkt_factor(problem.H, problem.A_eq)
        rhs = np.concatenate([-problem.g, problem.b_eq]) if r else -problem.g
        sol = scipy.linalg.lu_solve(factor, rhs)
        x = sol[:d]
        obj = 0.5 * float(x @ problem.H @ x) + float(problem.g @ x)
        eq_res = (float(np.max(np.abs(problem.A_eq @ x - problem.b_eq)))
                  if r else 0.0)
        grad = problem.H @ x + problem.g
        if r:
            grad = grad + problem.A_eq.T @ sol[d:]
        return SolveResult(x, obj, Status.OPTIMAL, eq_res,
                           float(np.max(np.abs(grad))), 0)

    S_terms = np.zeros((d, d))
    for c in cons:
        S_terms[c.indices, c.indices] += 1.0

    def factorize(rho_val):
        return _kkt_factor(problem.H + rho_val * S_terms, problem.A_eq)

    factor, r = _kkt_factor(problem.H + rho * S_terms, problem.A_eq)

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    z = ([x[c.indices].copy() for c in cons] if z0 is None
         else [np.array(v, dtype=float) for v in z0])
    u = ([np.zeros(c.indices.size) for c in cons] if u0 is None
         else [np.array(v, dtype=float) for v in u0])

    alpha = over_relaxation
    stall_count = 0
    prev_disp = None
    prev_z_flat = np.concatenate(z)
    status = Status.MAX_ITERS
    it = 0
    for it in range(1, max_iters + 1):
        rhs_top = -problem.g.copy()
        for c, zc, uc in zip(cons, z, u):
            rhs_top[c.indices] += rho * (zc - uc)
        rhs = np.concatenate([rhs_top, problem.b_eq]) if r else rhs_top
        x = scipy.linalg.lu_solve(factor, rhs)[:d]

        new_z = []
        for c, zc, uc in zip(cons, z, u):
            sx = x[c.indices]
            h = alpha * sx + (1.0 - alpha) * zc
            znew = c.project(h + uc)
            new_z.append(znew)
            uc += h - znew
        z = new_z

        z_flat = np.concatenate(z)
        primal = float(np.sqrt(sum(
            float(np.sum((x[c.indices] - zc) ** 2)) for c, zc in zip(cons, z))))
        dual = rho * float(np.linalg.norm(z_flat - prev_z_flat))
        prev_z_flat = z_flat

        if primal <= tol_primal and dual <= tol_dual:
            status = Status.OPTIMAL
            break

        if it % 5 == 0:
            cur = z_flat.copy()
            if prev_disp is not None:
                move = float(np.linalg.norm(cur - prev_disp))
                if (move <= 1e-10 * (1.0 + float(np.linalg.norm(cur)))
                        and primal > 1e3 * tol_primal):
                    stall_count += 5
                else:
                    stall_count = 0
            prev_disp = cur
        if stall_count >= 500:
            status = Status.INFEASIBLE
            break

        # Residual balancing; frozen while a stagnation streak is being
        # measured so the divergence certificate is not perturbed.
        if it % 25 == 0 and stall_count == 0:
            if primal > 10.0 * dual and dual > 0 and rho < 1e8 * rho_init:
                rho *= 2.0
                u = [uc / 2.0 for uc in u]
                factor, r = factorize(rho)
            elif dual > 10.0 * primal and primal >= 0 and rho > 1e-8 * rho_init:
                rho /= 2.0
                u = [uc * 2.0 for uc in u]
                factor, r = factorize(rho)

    obj = 0.5 * float(x @ problem.H @ x) + float(problem.g @ x)
    set_violation = max((c.violation(x[c.indices]) for c in cons), default=0.0)
    eq_violation = (float(np.max(np.abs(problem.A_eq @ x - problem.b_eq)))
                    if r else 0.0)
    primal_res = max(set_violation, eq_violation)
    grad = problem.H @ x + problem.g
    for c, uc in zip(cons, u):
        grad[c.indices] += rho * uc
    if r:
        # Recover equality multipliers by least squares on the stationarity gap.
        nu, *_ = np.linalg.lstsq(problem.A_eq.T, -grad, rcond=None)
        grad = grad + problem.A_eq.T @ nu
    dual_res = float(np.max(np.abs(grad)))
    if status is Status.OPTIMAL and primal_res > 10 * tol_primal:
        status = Status.MAX_ITERS
    return SolveResult(x, obj, status, primal_res, dual_res, it)


# ---------------------------------------------------------------------------
# Linear programming


def _simplex_tableau(c_min: np.ndarray, A_ub: np.ndarray, b_ub: np.ndarray,
                     tol: float = 1e-11):
    """min c_min'y s.t. A_ub y <= b_ub, y >= 0; two-phase, Bland's rule.

    Returns (y, duals, objective) or raises UnboundedProblem; returns None
    for an infeasible program.
    """
    m, n = A_ub.shape
    A = A_ub.copy().astype(float)
    b = b_ub.copy().astype(float)
    # Slack form A y + s = b with s >= 0; rows with b < 0 get artificials.
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    slack_sign = np.where(neg, -1.0, 1.0)
    n_art = int(np.sum(neg))

    total = n + m + n_art
    T = np.zeros((m, total))
    T[:, :n] = A
    T[:, n:n + m] = np.diag(slack_sign)
    art_cols = []
    k = 0
    basis = np.empty(m, dtype=int)
    for i in range(m):
        if neg[i]:
            col = n + m + k
            T[i, col] = 1.0
            art_cols.append(col)
            basis[i] = col
            k += 1
        else:
            basis[i] = n + i
    rhs = b.copy()

    def pivot(T, rhs, basis, row, col):
        piv = T[row, col]
        T[row] /= piv
        rhs[row] /= piv
        for i in range(T.shape[0]):
            if i != row and T[i, col] != 0.0:
                rhs[i] -= T[i, col] * rhs[row]
                T[i] -= T[i, col] * T[row]
        basis[row] = col

    def run_phase(cost):
        while True:
            # Reduced costs via the basic cost row.
            cb = cost[basis]
            reduced = cost - cb @ T
            entering = -1
            for j in range(total):
                if j in blocked:
                    continue
                if reduced[j] < -tol:
                    entering = j
                    break  # Bland: smallest index
            if entering < 0:
                return cb @ rhs
            ratios = np.full(m, np.inf)
            pos = T[:, entering] > tol
            ratios[pos] = rhs[pos] / T[pos, entering]
            if not np.any(pos):
                raise UnboundedProblem("objective unbounded below on the feasible set")
            row = -1
            best = np.inf
            for i in range(m):
                if pos[i] and (ratios[i] < best - tol
                               or (abs(ratios[i] - best) <= tol
                                   and (row < 0 or basis[i] < basis[row]))):
                    best = ratios[i]
                    row = i
            pivot(T, rhs, basis, row, entering)

    blocked: set = set()
    if n_art:
        phase1 = np.zeros(total)
        phase1[art_cols] = 1.0
        val = run_phase(phase1)
        if val > 1e-9 * max(1.0, float(np.max(np.abs(b)))):
            return None
        # Drive any artificial still basic out of the basis.
        for i in range(m):
            if basis[i] in art_cols:
                for j in range(n + m):
                    if abs(T[i, j]) > tol:
                        pivot(T, rhs, basis, i, j)
                        break
        blocked = set(art_cols)

    cost = np.zeros(total)
    cost[:n] = c_min
    run_phase(cost)

    y = np.zeros(total)
    y[basis] = rhs
    cb = cost[basis]
    reduced = cost - cb @ T
    duals = reduced[n:n + m] * slack_sign  # slack reduced costs = dual values
    return y[:n], duals, float(cost[:n] @ y[:n])


def solve_lp(c: np.ndarray, A_in: np.ndarray, b_in: np.ndarray,
             lower_bounds: np.ndarray,
             lexicographic: bool = True) -> SolveResult:
    """max c'x s.t. A_in x <= b_in, x >= lower_bounds.

    On a non-unique optimal face, the lexicographically smallest optimizer is
    selected by re-solving with one coordinate pinned per pass.  Raises
    UnboundedProblem when the objective is unbounded on the feasible set.
    """
    c = np.asarray(c, dtype=float)
    A_in = np.atleast_2d(np.asarray(A_in, dtype=float))
    b_in = np.asarray(b_in, dtype=float)
    lb = np.asarray(lower_bounds, dtype=float)
    d = c.shape[0]
    if A_in.shape[1] != d or A_in.shape[0] != b_in.shape[0] or lb.shape[0] != d:
        raise DimensionMismatch("LP data dimensions inconsistent")

    def solve_shifted(c_obj, A, b):
        # y = x - lb >= 0
        out = _simplex_tableau(-c_obj, A, b - A @ lb)
        if out is None:
            return None
        y, duals, _ = out
        return y + lb, duals

    out = solve_shifted(c, A_in, b_in)
    if out is None:
        return SolveResult(np.full(d, np.nan), np.nan, Status.INFEASIBLE,
                           np.nan, np.nan, 0)
    x, duals = out
    objective = float(c @ x)

    if lexicographic:
        # Pin the objective, then minimize coordinates one at a time.  Pins
        # are exact; roundoff-level violations are absorbed by the phase-1
        # feasibility tolerance.
        A_aug = np.vstack([A_in, -c[None, :]])
        b_aug = np.concatenate([b_in, [-objective]])
        for j in range(d):
            e = np.zeros(d)
            e[j] = -1.0  # maximize -x_j == minimize x_j
            out_j = solve_shifted(e, A_aug, b_aug)
            if out_j is None:
                break
            xj = out_j[0]
            pin = np.zeros(d)
            pin[j] = 1.0
            A_aug = np.vstack([A_aug, pin[None, :]])
            b_aug = np.concatenate([b_aug, [xj[j]]])
            x = xj
        objective = float(c @ x)

    slack = b_in - A_in @ x
    primal = float(max(np.max(-slack, initial=0.0), np.max(lb - x, initial=0.0)))
    comp = float(np.max(np.abs(duals * slack), initial=0.0)) if duals.size else 0.0
    return SolveResult(x, objective, Status.OPTIMAL, primal, comp, 1)
