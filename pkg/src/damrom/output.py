"""Field files (legacy VTK), phreatic line extraction and run reports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .solver import FieldState

#: decimals used to merge contour points shared by neighbouring triangles
_KEY_DECIMALS = 9


def phreatic_segments(mesh: Mesh, P: np.ndarray) -> np.ndarray:
    """Pieces of the p = 0 contour of the P1 pressure field, shape (S, 2, 2).

    Vertices with ``p > 0`` count as saturated; every triangle with mixed
    vertex states contributes one straight segment.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (mesh.n_nodes,):
        raise ValueError(f"pressure vector has shape {P.shape}, expected ({mesh.n_nodes},)")
    tri = mesh.triangles
    wet = P[tri] > 0.0
    mixed = wet.any(axis=1) & ~wet.all(axis=1)
    segs = []
    for t in tri[mixed]:
        pts = []
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            if (P[a] > 0) != (P[b] > 0):
                s = P[a] / (P[a] - P[b])
                pts.append(mesh.nodes[a] + s * (mesh.nodes[b] - mesh.nodes[a]))
        segs.append(pts[:2])
    return np.array(segs, dtype=float).reshape(-1, 2, 2)


def phreatic_line(mesh: Mesh, P: np.ndarray) -> list[np.ndarray]:
    """The p = 0 contour chained into polylines (each an (n, 2) array)."""
    segs = phreatic_segments(mesh, P)
    if not len(segs):
        return []
    keys = [tuple(np.round(p, _KEY_DECIMALS)) for p in segs.reshape(-1, 2)]
    nbrs: dict[tuple, list[int]] = {}
    for i in range(len(segs)):
        for end in (0, 1):
            nbrs.setdefault(keys[2 * i + end], []).append(i)
    used = np.zeros(len(segs), dtype=bool)
    lines = []

    def walk(seg, end, out):
        # extend from point ``end`` of ``seg`` until the chain stops
        while True:
            key = keys[2 * seg + end]
            nxt = [j for j in nbrs[key] if not used[j]]
            if not nxt:
                return
            seg = nxt[0]
            used[seg] = True
            end = 1 if keys[2 * seg] == key else 0
            out.append(segs[seg, end])

    # start at chain ends first so open lines come out whole
    order = sorted(range(len(segs)), key=lambda i: min(len(nbrs[keys[2 * i]]),
                                                       len(nbrs[keys[2 * i + 1]])))
    for i in order:
        if used[i]:
            continue
        used[i] = True
        fwd = [segs[i, 0], segs[i, 1]]
        walk(i, 1, fwd)
        back = []
        walk(i, 0, back)
        lines.append(np.array(back[::-1] + fwd))
    return lines


def _write_points(fh, pts2d: np.ndarray) -> None:
    fh.write(f"POINTS {len(pts2d)} double\n")
    for x, y in pts2d:
        fh.write(f"{x:.12g} {y:.12g} 0\n")


def write_fields(state: FieldState, mesh: Mesh, path) -> tuple[Path, Path]:
    """Legacy ASCII VTK of displacement and pressure at the mesh vertices.

    A second file ``<stem>_phreatic.vtk`` holds the p = 0 contour as POLYDATA
    lines. Returns both paths.
    """
    path = Path(path)
    nv = mesh.n_nodes
    if state.P.shape != (nv,) or state.U.shape[0] < 2 * nv:
        raise ValueError("state does not match the mesh")
    disp = state.U[:2 * nv].reshape(nv, 2)  # P2 vertex dofs come first
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"dam fields t={state.t:.6g} s\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        _write_points(fh, mesh.nodes)
        m = mesh.n_triangles
        fh.write(f"CELLS {m} {4 * m}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {m}\n")
        fh.write("5\n" * m)
        fh.write(f"POINT_DATA {nv}\nVECTORS displacement double\n")
        for ux, uy in disp:
            fh.write(f"{ux:.12g} {uy:.12g} 0\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for p in state.P:
            fh.write(f"{p:.12g}\n")

    lines = phreatic_line(mesh, state.P)
    ppath = path.with_name(path.stem + "_phreatic.vtk")
    pts = np.vstack(lines) if lines else np.zeros((0, 2))
    with open(ppath, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"phreatic line t={state.t:.6g} s\nASCII\nDATASET POLYDATA\n")
        _write_points(fh, pts)
        size = sum(len(ln) + 1 for ln in lines)
        fh.write(f"LINES {len(lines)} {size}\n")
        start = 0
        for ln in lines:
            fh.write(" ".join(map(str, [len(ln)] + list(range(start, start + len(ln))))) + "\n")
            start += len(ln)
    return path, ppath


def read_vtk_header(path) -> dict:
    """Dataset type, point count, cell count and cell types of a legacy VTK file."""
    info = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    for i, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "DATASET":
            info["dataset"] = parts[1]
        elif parts[0] == "POINTS":
            info["n_points"] = int(parts[1])
        elif parts[0] == "CELLS":
            info["n_cells"] = int(parts[1])
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            info["cell_types"] = sorted({int(v) for v in lines[i + 1:i + 1 + n]})
        elif parts[0] == "LINES":
            info["n_lines"] = int(parts[1])
    return info


@dataclass
class RunReport:
    """Summary of a FOM/ROM comparison."""

    k_s: float
    t: np.ndarray
    e_u: np.ndarray
    e_p: np.ndarray
    timings: dict[str, float]
    basis_sizes: tuple[int, int]
    dofs: dict[str, int]
    config_fingerprint: str = ""
    scenario_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.t) == len(self.e_u) == len(self.e_p)):
            raise ValueError("error series lengths differ")

    @property
    def speedup(self) -> float:
        fom, rom = self.timings.get("fom", 0.0), self.timings.get("online", 0.0)
        if not (fom > 0 and rom > 0):
            raise ValueError("speedup needs positive FOM and online wall times")
        return fom / rom

    def summary(self) -> dict:
        out = {
            "k_s": self.k_s,
            "n_steps": len(self.t),
            "max_e_u": float(np.max(self.e_u)) if len(self.e_u) else 0.0,
            "max_e_p": float(np.max(self.e_p)) if len(self.e_p) else 0.0,
            "basis_sizes": {"u": self.basis_sizes[0], "p": self.basis_sizes[1]},
            "dofs": dict(self.dofs),
            "config_fingerprint": self.config_fingerprint,
            "scenario_fingerprint": self.scenario_fingerprint,
            "timings": dict(self.timings),
        }
        try:
            out["speedup"] = self.speedup
        except ValueError:
            out["speedup"] = None
        out.update(self.extra)
        return out


def emit_report(report: RunReport, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (summary) and ``<path>.csv`` (t in days, e_p, e_u)."""
    base = Path(path)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    jpath, cpath = base.with_suffix(".json"), base.with_suffix(".csv")
    jpath.write_text(json.dumps(report.summary(), indent=1, sort_keys=True) + "\n")
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "e_p", "e_u"])
        for t, ep, eu in zip(report.t, report.e_p, report.e_u):
            w.writerow([f"{t / 86400.0:.6g}", f"{ep:.6e}", f"{eu:.6e}"])
    return jpath, cpath


def save_trajectory(traj, path, **meta) -> Path:
    """Store a trajectory (initial state included) as a compressed ``.npz``."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, U=traj.U_matrix(include_initial=True),
                        P=traj.P_matrix(include_initial=True), t=traj.times,
                        iterations=np.asarray(traj.iterations), wall=np.asarray(traj.wall),
                        steady=traj.steady, meta=json.dumps(meta, sort_keys=True))
    return path


def load_trajectory(path):
    """Inverse of :func:`save_trajectory`; returns ``(Trajectory, meta)``."""
    from .solver import Trajectory

    with np.load(path) as z:
        traj = Trajectory()
        for j, t in enumerate(z["t"]):
            traj.append(FieldState(z["U"][:, j].copy(), z["P"][:, j].copy(), float(t)),
                        int(z["iterations"][j]), float(z["wall"][j]))
        traj.steady = bool(z["steady"])
        meta = json.loads(str(z["meta"]))
    return traj, meta
