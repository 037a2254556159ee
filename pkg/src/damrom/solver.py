"""Monolithic theta-scheme time stepping with Picard linearisation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Assembler, OperatorSet, apply_dirichlet

log = logging.getLogger(__name__)

DAY = 86400.0


class SingularMatrixError(np.linalg.LinAlgError):
    """Sparse factorisation broke down."""


class PicardError(RuntimeError):
    """Picard iteration did not converge; carries the increment history."""

    def __init__(self, message: str, history: list[float], trajectory=None):
        super().__init__(f"{message}; increments: {', '.join(f'{h:.3e}' for h in history[-5:])}")
        self._message = message
        self.history = history
        self.trajectory = trajectory

    def __reduce__(self):
        # keep the exception intact across process boundaries (no trajectory)
        return (type(self), (self._message, self.history))


@dataclass(frozen=True)
class ThetaScheme:
    theta: float = 0.75
    dt: float = 0.1 * DAY

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")


@dataclass(frozen=True)
class PicardControl:
    tol_rel: float = 1e-6
    max_iters: int = 50
    relaxation: float = 1.0
    floor: float = 1e-14
    min_relaxation: float = 0.05
    refresh_ratio: float = 0.2
    reuse_factor: bool = True

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")

    def adapt(self, omega: float, history: list[float]) -> float:
        """Halve the relaxation when the increments stop shrinking.

        The seepage active set can toggle between iterates and lock plain
        Picard into a two-cycle; damping breaks the cycle.
        """
        if len(history) >= 3 and history[-1] > 0.7 * history[-2]:
            return max(0.5 * omega, self.min_relaxation)
        return omega

    def increment(self, dU, U, dP, P) -> float:
        """Increment of each field relative to its own norm, combined in quadrature."""
        ru = np.linalg.norm(dU) / max(np.linalg.norm(U), self.floor)
        rp = np.linalg.norm(dP) / max(np.linalg.norm(P), self.floor)
        return float(np.hypot(ru, rp))


@dataclass(frozen=True)
class StopRule:
    """Steady state when the step-to-step pressure change norm drops below ``tol``.

    The norm is taken on the pressure vector divided by ``pressure_scale``
    (1e3: kPa). The rule only fires once ``t >= t_min``; ``t_max`` caps the run.
    """

    tol: float = 1e-2
    pressure_scale: float = 1e3
    t_min: float = 0.0
    t_max: float = 365 * DAY

    def change(self, P_old, P_new) -> float:
        return float(np.linalg.norm(P_new - P_old) / self.pressure_scale)

    def steady(self, t: float, P_old, P_new) -> bool:
        return t >= self.t_min - 1e-9 and self.change(P_old, P_new) < self.tol


@dataclass
class FieldState:
    U: np.ndarray
    P: np.ndarray
    t: float = 0.0

    def vector(self) -> np.ndarray:
        return np.concatenate([self.U, self.P])

    @classmethod
    def from_vector(cls, x: np.ndarray, n_u: int, t: float = 0.0) -> "FieldState":
        return cls(x[:n_u].copy(), x[n_u:].copy(), t)


@dataclass
class Trajectory:
    """States at increasing times; ``states[0]`` is the initial condition."""

    states: list[FieldState] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    wall: list[float] = field(default_factory=list)
    steady: bool = False
    last_ops: OperatorSet | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def n_steps(self) -> int:
        return max(len(self.states) - 1, 0)

    @property
    def steps(self) -> list[FieldState]:
        return self.states[1:]

    def U_matrix(self, include_initial: bool = False) -> np.ndarray:
        s = self.states if include_initial else self.steps
        return np.column_stack([x.U for x in s])

    def P_matrix(self, include_initial: bool = False) -> np.ndarray:
        s = self.states if include_initial else self.steps
        return np.column_stack([x.P for x in s])

    @property
    def total_wall(self) -> float:
        return float(np.sum(self.wall))

    def append(self, state: FieldState, iters: int, wall: float) -> None:
        if self.states and not state.t > self.states[-1].t:
            raise ValueError("trajectory time stamps must increase")
        self.states.append(state)
        self.iterations.append(iters)
        self.wall.append(wall)


@dataclass
class CoupledSystem:
    """Blocks of the monolithic step system [[K, Q], [C, H]] [U; P] = [f_u; f_p]."""

    K: sp.spmatrix
    Q: sp.spmatrix
    C: sp.spmatrix
    H: sp.spmatrix
    f_u: np.ndarray
    f_p: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.K, self.Q], [self.C, self.H]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f_u, self.f_p])


def combine_theta(ops_i: OperatorSet, ops_i1: OperatorSet, prev: FieldState,
                  scheme: ThetaScheme) -> CoupledSystem:
    """Step system for level i+1 from operators at levels i and i+1.

    Follows from evaluating both equations at i + theta with every operator
    and load interpolated linearly between the levels, the flow equation
    multiplied through by dt. Operators may be rectangular (test rows by
    trial columns), which is how projected reduced operators are combined.
    """
    th, dt = scheme.theta, scheme.dt
    if ops_i.K.shape != ops_i1.K.shape or ops_i.H.shape != ops_i1.H.shape:
        raise ValueError("operator sets belong to different dof maps")
    if prev.U.shape[0] != ops_i.K.shape[1] or prev.P.shape[0] != ops_i.H.shape[1]:
        raise ValueError("previous state does not match operator dimensions")
    U0, P0 = prev.U, prev.P
    Q_mid = (1 - th) * ops_i.Q + th * ops_i1.Q
    C_mid = (1 - th) * ops_i.C + th * ops_i1.C
    H_mid = (1 - th) * ops_i.H + th * ops_i1.H
    S_mid = (1 - th) * ops_i.S + th * ops_i1.S

    K_hat = th * ops_i1.K
    Q_hat = -th * Q_mid
    f_u = (-(1 - th) * (ops_i.K @ U0) + (1 - th) * (Q_mid @ P0)
           + (1 - th) * ops_i.f_u + th * ops_i1.f_u)
    C_hat = C_mid
    H_hat = dt * th * H_mid - S_mid
    f_p = (-(dt * (1 - th) * (H_mid @ P0) + S_mid @ P0) + C_mid @ U0
           + dt * ((1 - th) * ops_i.f_p + th * ops_i1.f_p))
    return CoupledSystem(K_hat, Q_hat, C_hat, H_hat, f_u, f_p)


class SparseFactor:
    """Equilibrated sparse LU of a square matrix.

    Rows and then columns are scaled to unit max-norm before factorisation;
    ``solve`` undoes the scaling.
    """

    def __init__(self, A: sp.spmatrix):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"matrix is not square: {A.shape}")
        rmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
        if np.any(rmax == 0):
            raise SingularMatrixError(f"matrix has an empty row (row {int(np.argmin(rmax))})")
        self.r = 1.0 / rmax
        As = sp.diags(self.r) @ A
        cmax = np.asarray(abs(As).max(axis=0).todense()).ravel()
        if np.any(cmax == 0):
            raise SingularMatrixError(
                f"matrix has an empty column (column {int(np.argmin(cmax))})")
        self.c = 1.0 / cmax
        As = sp.csc_matrix(As @ sp.diags(self.c))
        try:
            # symmetric-pattern ordering with mild diagonal preference keeps fill low
            self.lu = spla.splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                                options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
        diagU = np.abs(self.lu.U.diagonal())
        if diagU.min() <= 1e-14 * diagU.max():
            k = int(np.argmin(diagU))
            raise SingularMatrixError(
                f"numerically singular: pivot {k} = {diagU[k]:.3e} (max {diagU.max():.3e})")
        self.shape = A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side has length {b.shape[0]}, expected {self.shape[0]}")
        return self.c * self.lu.solve(self.r * b)


def solve_sparse(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct sparse solve with row/column equilibration.

    Guarantees ``|A x - b| <= 1e-10 (|A|_F |x| + |b|)`` or logs a warning
    after two refinement sweeps.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system shapes {A.shape} and {b.shape}")
    F = SparseFactor(A)
    x = F.solve(b)
    bound = 1e-10 * (spla.norm(A) * np.linalg.norm(x) + np.linalg.norm(b))
    for _ in range(2):
        res = b - A @ x
        if np.linalg.norm(res) <= bound:
            break
        x = x + F.solve(res)
    else:
        if np.linalg.norm(b - A @ x) > bound:
            log.warning("sparse solve residual above contract bound")
    return x


class FactorCache:
    """Holds the last step-matrix factorisation between Picard iterates and steps."""

    def __init__(self):
        self.factor: SparseFactor | None = None
        self.n_factorizations = 0

    def refresh(self, A) -> SparseFactor:
        self.factor = SparseFactor(A)
        self.n_factorizations += 1
        return self.factor


def picard_solve_step(state: FieldState, ops_i: OperatorSet, scheme: ThetaScheme,
                      control: PicardControl, assembler: Assembler,
                      cache: FactorCache | None = None):
    """Advance one step; returns ``(state_i+1, ops_i+1, iterations)``.

    Every iterate reassembles the step system ``A(X) X = b(X)`` at the current
    pressure and applies the correction ``F^-1 (b - A X)``. With ``F = A(X)``
    this is the plain Picard update; with a cache, ``F`` is an earlier
    factorisation that is refreshed whenever the increments stop contracting
    quickly. Both variants share the same fixed point.
    """
    dm = assembler.dofmap
    n_u = dm.n_u
    t1 = state.t + scheme.dt
    traction = assembler.traction_vector(t1)
    X = state.vector()
    X[dm.constrained] = dm.constrained_values
    history = []
    omega = control.relaxation
    fresh_only = cache is None
    cache = cache or FactorCache()
    stale = cache.factor is None
    for it in range(1, control.max_iters + 1):
        ops = assembler.state_operators(X[n_u:], t1, traction=traction)
        system = combine_theta(ops_i, ops, state, scheme)
        A, b = apply_dirichlet(system.matrix(), system.rhs(), dm)
        fresh = stale or fresh_only
        F = cache.refresh(A) if fresh else cache.factor
        dX = omega * F.solve(b - A @ X)
        X_new = X + dX
        inc = control.increment(dX[:n_u], X_new[:n_u], dX[n_u:], X_new[n_u:])
        history.append(inc)
        X = X_new
        if inc < control.tol_rel:
            new = FieldState.from_vector(X, n_u, t1)
            return new, assembler.state_operators(new.P, t1, traction=traction), it
        slow = len(history) >= 2 and history[-1] > control.refresh_ratio * history[-2]
        if fresh:
            stale = False
            omega = control.adapt(omega, history)
        elif slow or len(history) >= 8:
            stale = True
    raise PicardError(f"Picard did not converge in {control.max_iters} iterations at t = {t1:.6g} s",
                      history)


def run_transient(assembler: Assembler, initial: FieldState, scheme: ThetaScheme,
                  control: PicardControl, stop: StopRule | None = None,
                  n_steps: int | None = None, ops_initial: OperatorSet | None = None) -> Trajectory:
    """Fixed-step transient run.

    With ``n_steps`` the run takes exactly that many steps; otherwise it ends
    when ``stop`` declares steady state or ``stop.t_max`` is reached.
    """
    if stop is None and n_steps is None:
        raise ValueError("need a stop rule or a step count")
    traj = Trajectory()
    traj.append(initial, 0, 0.0)
    ops = ops_initial or assembler.state_operators(initial.P, initial.t)
    state = initial
    step = 0
    cache = FactorCache() if control.reuse_factor else None
    while True:
        tic = time.perf_counter()
        try:
            new, ops, iters = picard_solve_step(state, ops, scheme, control, assembler, cache)
        except PicardError as exc:
            exc.trajectory = traj
            raise
        traj.append(new, iters, time.perf_counter() - tic)
        step += 1
        if n_steps is not None:
            if step >= n_steps:
                break
        else:
            if stop.steady(new.t, state.P, new.P):
                traj.steady = True
                break
            if new.t >= stop.t_max - 1e-9:
                break
        state = new
    traj.last_ops = ops
    return traj


def steady_solve(assembler: Assembler, guess: FieldState, control: PicardControl) -> FieldState:
    """Picard solution of the time-independent coupled problem at ``guess.t``."""
    dm = assembler.dofmap
    n_u = dm.n_u
    X = guess.vector()
    traction = assembler.traction_vector(guess.t)
    history = []
    Z = sp.csr_matrix((dm.n_p, n_u))
    omega = control.relaxation
    for _ in range(control.max_iters):
        ops = assembler.state_operators(X[n_u:], guess.t, traction=traction)
        A = sp.bmat([[ops.K, -ops.Q], [Z, ops.H]], format="csr")
        b = np.concatenate([ops.f_u, ops.f_p])
        A, b = apply_dirichlet(A, b, dm)
        X_star = solve_sparse(A, b)
        X_new = omega * X_star + (1 - omega) * X
        inc = control.increment(X_new[:n_u] - X[:n_u], X_new[:n_u], X_new[n_u:] - X[n_u:], X_new[n_u:])
        history.append(inc)
        X = X_new
        omega = control.adapt(omega, history)
        if inc < control.tol_rel:
            return FieldState.from_vector(X, n_u, guess.t)
    raise PicardError(f"steady Picard did not converge in {control.max_iters} iterations", history)


def hydrostatic_guess(assembler: Assembler, water_level: float) -> FieldState:
    dm = assembler.dofmap
    y = assembler.mesh.nodes[:, 1]
    P = assembler.params.gamma_w * (water_level - y)
    P[dm.constrained[dm.constrained >= dm.n_u] - dm.n_u] = dm.constrained_values[dm.constrained >= dm.n_u]
    return FieldState(np.zeros(dm.n_u), P, 0.0)


def initial_steady_state(assembler: Assembler, water_level: float, scheme: ThetaScheme,
                         control: PicardControl | None = None,
                         stop: StopRule | None = None) -> FieldState:
    """Steady state under the loads at t = 0, confirmed by transient stepping.

    A direct steady Picard solve from the hydrostatic guess provides the state;
    transient steps under frozen t = 0 loads then run until the stop rule fires
    (normally after one step), and that state's fields are returned at t = 0.
    """
    control = control or PicardControl()
    stop = stop or StopRule()
    guess = hydrostatic_guess(assembler, water_level)
    relaxed = PicardControl(control.tol_rel, max(control.max_iters, 100), control.relaxation)
    try:
        state = steady_solve(assembler, guess, relaxed)
    except PicardError:
        log.info("plain steady Picard stalled; retrying with relaxation 0.5")
        state = steady_solve(assembler, guess, PicardControl(control.tol_rel, 200, 0.5))
    frozen = _FrozenTime(assembler, 0.0)
    ops = frozen.state_operators(state.P, 0.0)
    for _ in range(int(stop.t_max / scheme.dt) + 1):
        new, ops, _ = picard_solve_step(state, ops, scheme, control, frozen)
        done = stop.change(state.P, new.P) < stop.tol
        state = FieldState(new.U, new.P, new.t)
        if done:
            break
    return FieldState(state.U, state.P, 0.0)


class _FrozenTime:
    """Assembler view whose loads stay at a fixed time."""

    def __init__(self, assembler: Assembler, t: float):
        self._a = assembler
        self._t = t
        self._traction = assembler.traction_vector(t)
        self.dofmap = assembler.dofmap
        self.mesh = assembler.mesh
        self.params = assembler.params

    def traction_vector(self, t):
        return self._traction

    def state_operators(self, P, t=0.0, traction=None):
        return self._a.state_operators(P, t, traction=self._traction)
