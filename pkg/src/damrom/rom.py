"""Reduced basis (POD) model of the coupled dam problem.

Offline: full-order runs over a list of conductivities are stored as snapshot
matrices, one per field. The Dirichlet lift is subtracted, the remainder is
compressed by a thin SVD and truncated relative to the largest singular value.

Online: every Picard iterate reconstructs the full pressure, assembles the
full-order operators there and projects them onto the basis. Trial spaces are
augmented with the lift column, ``[B | lift]``, so the projected operators act
on ``[alpha; 1]`` and the lift contributions land on the right-hand side. The
reduced step system is dense and solved directly.
"""
from __future__ import annotations

import concurrent.futures
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .assembly import Assembler, DofMap, OperatorSet
from .solver import (FieldState, PicardControl, PicardError, StopRule, ThetaScheme, Trajectory,
                     combine_theta, initial_steady_state, run_transient)

log = logging.getLogger(__name__)

#: paper sweep of saturated conductivities (m/s)
PAPER_SWEEP = (1e-9, 3e-9, 5e-9, 7e-9, 1e-8, 3e-8, 5e-8, 7e-8, 1e-7)

#: environment variable holding the worker count for snapshot runs
WORKERS_ENV = "DAMROM_WORKERS"

_MAGIC = b"DRBMAT01"


class SnapshotError(RuntimeError):
    """A full-order run inside the snapshot sweep failed."""


class BasisArchiveError(OSError):
    """Basis archive missing, corrupt or built for a different mesh."""


# --- snapshots ------------------------------------------------------------------


@dataclass
class SnapshotSet:
    """Serial snapshot matrices with per-column metadata."""

    M_u: np.ndarray
    M_p: np.ndarray
    k_s: np.ndarray
    t: np.ndarray
    run: np.ndarray
    wall: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.k_s = np.asarray(self.k_s, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.run = np.asarray(self.run, dtype=np.int64)
        n = self.M_u.shape[1]
        if not (self.M_p.shape[1] == n == self.k_s.size == self.t.size == self.run.size):
            raise ValueError("snapshot matrices and metadata disagree on the column count")

    @property
    def n_columns(self) -> int:
        return self.M_u.shape[1]

    @property
    def runs(self) -> list[int]:
        return sorted(set(self.run.tolist()))

    def columns_of(self, run: int) -> np.ndarray:
        return np.flatnonzero(self.run == run)

    def save(self, directory) -> Path:
        """One matrix file per field and run plus a JSON index."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = {"runs": []}
        for r in self.runs:
            cols = self.columns_of(r)
            fu, fp = f"run{r:03d}_U.npy", f"run{r:03d}_P.npy"
            np.save(d / fu, self.M_u[:, cols])
            np.save(d / fp, self.M_p[:, cols])
            index["runs"].append({"run": r, "k_s": float(self.k_s[cols[0]]),
                                  "t": self.t[cols].tolist(), "U": fu, "P": fp,
                                  "wall": self.wall.get(r)})
        (d / "index.json").write_text(json.dumps(index, indent=1))
        return d

    @classmethod
    def load(cls, directory) -> "SnapshotSet":
        d = Path(directory)
        try:
            index = json.loads((d / "index.json").read_text())
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"snapshot index not found in {d}") from exc
        Us, Ps, ks, ts, runs, wall = [], [], [], [], [], {}
        for entry in index["runs"]:
            U, P = np.load(d / entry["U"]), np.load(d / entry["P"])
            n = len(entry["t"])
            if U.shape[1] != n or P.shape[1] != n:
                raise ValueError(f"run {entry['run']}: matrix width differs from its time list")
            Us.append(U)
            Ps.append(P)
            ks += [entry["k_s"]] * n
            ts += entry["t"]
            runs += [entry["run"]] * n
            if entry.get("wall") is not None:
                wall[entry["run"]] = entry["wall"]
        return cls(np.hstack(Us), np.hstack(Ps), ks, ts, runs, wall)


def _snapshot_run(scenario, k_s, initial, scheme, control, stop, n_steps):
    assembler = scenario.with_ks(k_s).build()
    tic = time.perf_counter()
    traj = run_transient(assembler, initial, scheme, control, stop=stop, n_steps=n_steps)
    return traj.U_matrix(), traj.P_matrix(), traj.times[1:], time.perf_counter() - tic


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def collect_snapshots(parameter_list, scenario, scheme: ThetaScheme | None = None,
                      control: PicardControl | None = None, stop: StopRule | None = None,
                      n_steps: int | None = None, initial: FieldState | None = None,
                      workers: int | None = None) -> SnapshotSet:
    """Full-order runs for each conductivity, stacked column-wise in list order.

    Each run starts from the common initial steady state (the steady pressure
    does not depend on the conductivity) and lasts until ``stop`` fires, or
    exactly ``n_steps`` steps. The initial state itself is not stored.
    Runs are spread over ``workers`` processes (default: the value of
    ``DAMROM_WORKERS``, else 1); results are merged in list order.
    """
    ks_list = [float(k) for k in parameter_list]
    if not ks_list:
        raise ValueError("empty parameter list")
    if min(ks_list) <= 0:
        raise ValueError("conductivities must be positive")
    scheme = scheme or ThetaScheme()
    control = control or PicardControl()
    if stop is None and n_steps is None:
        stop = StopRule(t_min=scenario.schedule.ramp_duration, t_max=scenario.schedule.t_max)
    if initial is None:
        initial = initial_steady_state(scenario.build(), scenario.geometry.WL, scheme, control)

    args = [(scenario, k, initial, scheme, control, stop, n_steps) for k in ks_list]
    n_workers = min(_worker_count(workers), len(ks_list))
    results = [None] * len(ks_list)

    def fail(i, exc):
        raise SnapshotError(f"full-order run for k_s = {ks_list[i]:.3g} m/s failed: {exc}") from exc

    if n_workers == 1:
        for i, a in enumerate(args):
            try:
                results[i] = _snapshot_run(*a)
            except (PicardError, ArithmeticError, np.linalg.LinAlgError) as exc:
                fail(i, exc)
    else:
        with concurrent.futures.ProcessPoolExecutor(n_workers) as pool:
            futures = [pool.submit(_snapshot_run, *a) for a in args]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except (PicardError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    fail(i, exc)

    M_u = np.hstack([r[0] for r in results])
    M_p = np.hstack([r[1] for r in results])
    ks = np.concatenate([np.full(r[0].shape[1], k) for r, k in zip(results, ks_list)])
    t = np.concatenate([r[2] for r in results])
    run = np.concatenate([np.full(r[0].shape[1], i) for i, r in enumerate(results)])
    wall = {i: r[3] for i, r in enumerate(results)}
    return SnapshotSet(M_u, M_p, ks, t, run, wall)


# --- POD -------------------------------------------------------------------------


@dataclass(frozen=True)
class PODBlock:
    """Truncated left singular vectors and the singular values around the cut."""

    vectors: np.ndarray
    sigma: np.ndarray  # retained, descending
    discarded: np.ndarray

    @property
    def size(self) -> int:
        return self.vectors.shape[1]


def build_basis(M: np.ndarray, threshold_ratio: float = 1e-4) -> PODBlock:
    """Thin SVD of ``M``; keep left vectors with ``sigma_i / sigma_1 >= threshold_ratio``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("snapshot matrix must be a non-empty 2-D array")
    if not 0 < threshold_ratio < 1:
        raise ValueError(f"threshold ratio must lie in (0, 1), got {threshold_ratio}")
    if not np.any(M):
        raise ValueError("snapshot matrix is identically zero")
    U, s, _ = sla.svd(M, full_matrices=False, lapack_driver="gesdd")
    keep = int(np.count_nonzero(s >= threshold_ratio * s[0]))
    return PODBlock(U[:, :keep].copy(), s[:keep].copy(), s[keep:].copy())


@dataclass
class ReducedBasis:
    """Orthonormal bases per field, zero on constrained dofs, plus the lift."""

    B_u: np.ndarray
    B_p: np.ndarray
    lift: np.ndarray  # full monolithic vector with the prescribed values
    sigma_u: np.ndarray
    sigma_p: np.ndarray
    threshold: float
    dof_fingerprint: str = ""
    mesh_hash: str = ""

    def __post_init__(self):
        n_u, n_p = self.B_u.shape[0], self.B_p.shape[0]
        if self.lift.shape != (n_u + n_p,):
            raise ValueError("lift length differs from the basis row counts")

    @property
    def n_u(self) -> int:
        return self.B_u.shape[0]

    @property
    def sizes(self) -> tuple[int, int]:
        return self.B_u.shape[1], self.B_p.shape[1]

    @property
    def lift_u(self) -> np.ndarray:
        return self.lift[:self.n_u]

    @property
    def lift_p(self) -> np.ndarray:
        return self.lift[self.n_u:]

    def check_compatible(self, dofmap: DofMap) -> None:
        if self.mesh_hash and self.mesh_hash != dofmap.mesh.fingerprint():
            raise BasisArchiveError("basis was built on a different mesh")
        if self.dof_fingerprint and self.dof_fingerprint != dofmap.fingerprint():
            raise BasisArchiveError("basis was built for different boundary constraints")
        if (self.B_u.shape[0], self.B_p.shape[0]) != (dofmap.n_u, dofmap.n_p):
            raise BasisArchiveError("basis dimensions do not match the dof map")

    # archive: per-field binary matrices plus a JSON manifest
    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix(d / "B_u.bin", self.B_u)
        write_matrix(d / "B_p.bin", self.B_p)
        write_matrix(d / "lift.bin", self.lift[:, None])
        manifest = {
            "threshold": self.threshold,
            "sigma_u": self.sigma_u.tolist(),
            "sigma_p": self.sigma_p.tolist(),
            "sizes": list(self.sizes),
            "dof_fingerprint": self.dof_fingerprint,
            "mesh_hash": self.mesh_hash,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1))
        return d

    @classmethod
    def load(cls, directory, dofmap: DofMap | None = None) -> "ReducedBasis":
        d = Path(directory)
        if not (d / "manifest.json").is_file():
            raise BasisArchiveError(f"basis not found in {d}")
        try:
            manifest = json.loads((d / "manifest.json").read_text())
            basis = cls(read_matrix(d / "B_u.bin"), read_matrix(d / "B_p.bin"),
                        read_matrix(d / "lift.bin")[:, 0],
                        np.array(manifest["sigma_u"]), np.array(manifest["sigma_p"]),
                        float(manifest["threshold"]), manifest["dof_fingerprint"],
                        manifest["mesh_hash"])
        except (OSError, KeyError, ValueError) as exc:
            raise BasisArchiveError(f"corrupt basis archive in {d}: {exc}") from exc
        if dofmap is not None:
            basis.check_compatible(dofmap)
        return basis


def write_matrix(path, A: np.ndarray) -> None:
    """Row-major little-endian float64 with an 8-byte magic and int64 shape header."""
    A = np.ascontiguousarray(A, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.array(A.shape, dtype="<i8").tobytes())
        fh.write(A.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a basis matrix file")
    rows, cols = np.frombuffer(raw[8:24], dtype="<i8")
    data = np.frombuffer(raw[24:], dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} values, found {data.size}")
    return data.reshape(rows, cols).copy()


def build_reduced_basis(snapshots: SnapshotSet, dofmap: DofMap,
                        threshold_ratio: float = 1e-4) -> ReducedBasis:
    """POD of the lift-free snapshots of both fields."""
    lift = dofmap.lift()
    n_u = dofmap.n_u
    if snapshots.M_u.shape[0] != n_u or snapshots.M_p.shape[0] != dofmap.n_p:
        raise ValueError("snapshot rows do not match the dof map")
    free = dofmap.free_mask()
    Mu = (snapshots.M_u - lift[:n_u, None]) * free[:n_u, None]
    Mp = (snapshots.M_p - lift[n_u:, None]) * free[n_u:, None]
    bu, bp = build_basis(Mu, threshold_ratio), build_basis(Mp, threshold_ratio)
    # the SVD leaves round-off in the zero rows; clear it so B alpha + lift is exact there
    Bu, Bp = bu.vectors, bp.vectors
    Bu[~free[:n_u]] = 0.0
    Bp[~free[n_u:]] = 0.0
    return ReducedBasis(Bu, Bp, lift, bu.sigma, bp.sigma, threshold_ratio,
                        dofmap.fingerprint(), dofmap.mesh.fingerprint())


# --- online solver -------------------------------------------------------------------


@dataclass
class ReducedState:
    a_u: np.ndarray
    a_p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not (np.all(np.isfinite(self.a_u)) and np.all(np.isfinite(self.a_p))):
            raise FloatingPointError("non-finite reduced coefficients")

    def augmented(self) -> FieldState:
        """Coefficients with the unit lift weight appended."""
        return FieldState(np.append(self.a_u, 1.0), np.append(self.a_p, 1.0), self.t)


def reconstruct(basis: ReducedBasis, state: ReducedState) -> FieldState:
    if state.a_u.shape != (basis.sizes[0],) or state.a_p.shape != (basis.sizes[1],):
        raise ValueError("reduced state does not match the basis widths")
    return FieldState(basis.B_u @ state.a_u + basis.lift_u,
                      basis.B_p @ state.a_p + basis.lift_p, state.t)


def project(basis: ReducedBasis, state: FieldState) -> ReducedState:
    return ReducedState(basis.B_u.T @ (state.U - basis.lift_u),
                        basis.B_p.T @ (state.P - basis.lift_p), state.t)


class ReducedProblem:
    """Projection of full-order operators onto ``[B | lift]`` trial spaces."""

    def __init__(self, basis: ReducedBasis, assembler: Assembler):
        basis.check_compatible(assembler.dofmap)
        self.basis = basis
        self.assembler = assembler
        self.Tu = np.column_stack([basis.B_u, basis.lift_u])
        self.Tp = np.column_stack([basis.B_p, basis.lift_p])
        # K does not depend on the state
        self.K_r = basis.B_u.T @ (assembler.stiffness() @ self.Tu)

    def project_operators(self, ops: OperatorSet) -> OperatorSet:
        Bu, Bp = self.basis.B_u, self.basis.B_p
        return OperatorSet(
            K=self.K_r,
            Q=Bu.T @ (ops.Q @ self.Tp),
            C=Bp.T @ (ops.C @ self.Tu),
            S=Bp.T @ (ops.S @ self.Tp),
            H=Bp.T @ (ops.H @ self.Tp),
            f_u=Bu.T @ ops.f_u,
            f_p=Bp.T @ ops.f_p,
            P=ops.P, t=ops.t)

    def operators_at(self, state: ReducedState, t: float, traction=None) -> OperatorSet:
        P = self.basis.B_p @ state.a_p + self.basis.lift_p
        return self.project_operators(self.assembler.state_operators(P, t, traction=traction))


def _dense_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    r = 1.0 / np.maximum(np.abs(A).max(axis=1), np.finfo(float).tiny)
    As = A * r[:, None]
    c = 1.0 / np.maximum(np.abs(As).max(axis=0), np.finfo(float).tiny)
    return c * sla.solve(As * c[None, :], r * b, check_finite=True)


def reduce_and_solve_step(state: ReducedState, ops_i: OperatorSet, problem: ReducedProblem,
                          scheme: ThetaScheme, control: PicardControl):
    """One reduced step; returns ``(state_i+1, reduced ops_i+1, iterations)``.

    ``ops_i`` holds projected operators at the previous level.
    """
    nu, npr = problem.basis.sizes
    t1 = state.t + scheme.dt
    traction = problem.assembler.traction_vector(t1)
    prev = state.augmented()
    a = np.concatenate([state.a_u, state.a_p])
    history = []
    omega = control.relaxation
    for it in range(1, control.max_iters + 1):
        cur = ReducedState(a[:nu], a[nu:], t1)
        ops = problem.operators_at(cur, t1, traction)
        sysr = combine_theta(ops_i, ops, prev, scheme)
        A = np.block([[sysr.K[:, :nu], sysr.Q[:, :npr]], [sysr.C[:, :nu], sysr.H[:, :npr]]])
        b = np.concatenate([sysr.f_u - sysr.K[:, nu] - sysr.Q[:, npr],
                            sysr.f_p - sysr.C[:, nu] - sysr.H[:, npr]])
        a_star = _dense_solve(A, b)
        a_new = omega * a_star + (1 - omega) * a
        d = a_new - a
        inc = control.increment(d[:nu], a_new[:nu], d[nu:], a_new[nu:])
        history.append(inc)
        a = a_new
        omega = control.adapt(omega, history)
        if inc < control.tol_rel:
            new = ReducedState(a[:nu].copy(), a[nu:].copy(), t1)
            return new, problem.operators_at(new, t1, traction), it
    raise PicardError(f"reduced Picard did not converge in {control.max_iters} iterations "
                      f"at t = {t1:.6g} s", history)


@dataclass
class ReducedRun:
    """Online result: reconstructed trajectory plus the reduced coefficients."""

    trajectory: Trajectory
    reduced: list[ReducedState]

    @property
    def wall(self) -> float:
        return self.trajectory.total_wall


def run_reduced(basis: ReducedBasis, assembler: Assembler, initial: FieldState,
                scheme: ThetaScheme, control: PicardControl, n_steps: int | None = None,
                stop: StopRule | None = None) -> ReducedRun:
    """Online transient run; same stepping and stop logic as the full model.

    Only full-order assembly and dense reduced solves are used.
    """
    if stop is None and n_steps is None:
        raise ValueError("need a stop rule or a step count")
    problem = ReducedProblem(basis, assembler)
    rs = project(basis, initial)
    traj = Trajectory()
    traj.append(reconstruct(basis, rs), 0, 0.0)
    reduced = [rs]
    ops = problem.operators_at(rs, rs.t)
    step = 0
    while True:
        tic = time.perf_counter()
        try:
            new, ops, iters = reduce_and_solve_step(rs, ops, problem, scheme, control)
        except PicardError as exc:
            exc.trajectory = traj
            raise
        full = reconstruct(basis, new)
        traj.append(full, iters, time.perf_counter() - tic)
        reduced.append(new)
        step += 1
        if n_steps is not None:
            if step >= n_steps:
                break
        else:
            if stop.steady(full.t, traj.states[-2].P, full.P):
                traj.steady = True
                break
            if full.t >= stop.t_max - 1e-9:
                break
        rs = new
    return ReducedRun(traj, reduced)


# --- comparison -------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorReport:
    t: np.ndarray
    e_u: np.ndarray
    e_p: np.ndarray
    fom_wall: float
    rom_wall: float

    @property
    def max_e_u(self) -> float:
        return float(self.e_u.max())

    @property
    def max_e_p(self) -> float:
        return float(self.e_p.max())

    @property
    def speedup(self) -> float:
        return self.fom_wall / self.rom_wall if self.rom_wall > 0 else float("inf")


def _relative_series(X_rom: np.ndarray, X_fom: np.ndarray) -> np.ndarray:
    num = np.linalg.norm(X_rom - X_fom, axis=0)
    den = np.linalg.norm(X_fom, axis=0)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def compare_fom_rom(fom: Trajectory, rom: Trajectory) -> ErrorReport:
    """Per-step relative Euclidean errors of each field and the wall-time ratio."""
    if fom.n_steps != rom.n_steps or not np.allclose(fom.times, rom.times, rtol=0, atol=1e-6):
        raise ValueError(f"time grids differ: {fom.n_steps} vs {rom.n_steps} steps")
    if fom.n_steps == 0:
        raise ValueError("trajectories contain no steps")
    return ErrorReport(fom.times[1:], _relative_series(rom.U_matrix(), fom.U_matrix()),
                       _relative_series(rom.P_matrix(), fom.P_matrix()),
                       fom.total_wall, rom.total_wall)
