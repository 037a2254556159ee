"""Command-line driver.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 input/output error (missing basis, unreadable files).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, default_config, load_config
from .mesh import MeshError, boundary_measure
from .output import RunReport, emit_report, load_trajectory, save_trajectory, write_fields
from .rom import (BasisArchiveError, ReducedBasis, SnapshotError, SnapshotSet,
                  build_reduced_basis, collect_snapshots, compare_fom_rom, run_reduced)
from .solver import DAY, PicardError, SingularMatrixError, initial_steady_state, run_transient

log = logging.getLogger("damrom")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="damrom", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, ks=False):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="TOML run configuration (default: shipped dam.toml)")
        s.add_argument("--out", help="output directory (overrides [output].directory)")
        if ks:
            s.add_argument("--ks", type=float, help="saturated conductivity in m/s")
        return s

    add("fom", "full-order transient run", ks=True)
    add("snapshots", "full-order sweep over [rom].sweep")
    add("build-rom", "POD basis from stored snapshots")
    s = add("rom", "online reduced run", ks=True)
    s.add_argument("--steps", type=int, help="fixed step count instead of the stop rule")
    s = add("compare", "error report from stored fom and rom trajectories", ks=True)
    add("bench", "fom and rom at the same conductivity, timed", ks=True)
    add("mesh-info", "mesh and dof counts")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.out:
        cfg.output.directory = str(Path(args.out).resolve())
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    d = cfg.resolve(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sub_dir(cfg: RunConfig, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else _out_dir(cfg) / p


def _ks(args, cfg) -> float:
    ks = cfg.material.k_s if getattr(args, "ks", None) is None else args.ks
    if not ks > 0:
        raise ConfigError(f"k_s must be positive, got {ks}")
    return ks


def _tag(ks: float) -> str:
    return f"ks{ks:.3g}".replace("+", "")


def _initial(cfg, assembler):
    return initial_steady_state(assembler, cfg.geometry.WL, cfg.scheme(), cfg.picard(),
                                cfg.stop_rule())


def _write_series(cfg, traj, mesh, stem: str) -> None:
    if "vtk" not in cfg.output.formats:
        return
    d = _out_dir(cfg) / "fields"
    d.mkdir(exist_ok=True)
    cadence = cfg.output.field_cadence
    for j, st in enumerate(traj.states):
        if j % cadence == 0 or j == len(traj.states) - 1:
            write_fields(st, mesh, d / f"{stem}_{j:05d}.vtk")


def cmd_fom(args, cfg) -> int:
    ks = _ks(args, cfg)
    sc = cfg.scenario(ks)
    A = sc.build()
    init = _initial(cfg, A)
    traj = run_transient(A, init, cfg.scheme(), cfg.picard(), stop=cfg.stop_rule())
    path = save_trajectory(traj, _out_dir(cfg) / f"fom_{_tag(ks)}", k_s=ks, kind="fom",
                           scenario=sc.fingerprint())
    _write_series(cfg, traj, sc.mesh, f"fom_{_tag(ks)}")
    print(json.dumps({"k_s": ks, "n_steps": traj.n_steps, "t_end_days": traj.times[-1] / DAY,
                      "steady": traj.steady, "wall": traj.total_wall, "trajectory": str(path)}))
    return 0


def cmd_snapshots(args, cfg) -> int:
    sc = cfg.scenario()
    A = sc.build()
    init = _initial(cfg, A)
    tic = time.perf_counter()
    snaps = collect_snapshots(cfg.rom.sweep, sc, cfg.scheme(), cfg.picard(), cfg.stop_rule(),
                              initial=init)
    d = snaps.save(_sub_dir(cfg, cfg.rom.snapshot_dir))
    np.savez(d / "initial.npz", U=init.U, P=init.P)
    print(json.dumps({"runs": len(snaps.runs), "columns": snaps.n_columns,
                      "wall": time.perf_counter() - tic, "directory": str(d)}))
    return 0


def cmd_build_rom(args, cfg) -> int:
    sc = cfg.scenario()
    snaps = SnapshotSet.load(_sub_dir(cfg, cfg.rom.snapshot_dir))
    tic = time.perf_counter()
    basis = build_reduced_basis(snaps, sc.build().dofmap, cfg.rom.threshold_ratio)
    d = basis.save(_sub_dir(cfg, cfg.rom.basis_dir))
    print(json.dumps({"sizes": {"u": basis.sizes[0], "p": basis.sizes[1]},
                      "wall": time.perf_counter() - tic, "directory": str(d)}))
    return 0


def _load_basis(cfg, dofmap) -> ReducedBasis:
    return ReducedBasis.load(_sub_dir(cfg, cfg.rom.basis_dir), dofmap)


def cmd_rom(args, cfg) -> int:
    ks = _ks(args, cfg)
    sc = cfg.scenario(ks)
    A = sc.build()
    basis = _load_basis(cfg, A.dofmap)
    init = _initial(cfg, A)
    stop = None if args.steps else cfg.stop_rule()
    run = run_reduced(basis, A, init, cfg.scheme(), cfg.picard(), n_steps=args.steps, stop=stop)
    path = save_trajectory(run.trajectory, _out_dir(cfg) / f"rom_{_tag(ks)}", k_s=ks, kind="rom",
                           scenario=sc.fingerprint())
    _write_series(cfg, run.trajectory, sc.mesh, f"rom_{_tag(ks)}")
    print(json.dumps({"k_s": ks, "n_steps": run.trajectory.n_steps, "wall": run.wall,
                      "sizes": list(basis.sizes), "trajectory": str(path)}))
    return 0


def _report(cfg, sc, ks, fom, rom, basis_sizes, timings) -> RunReport:
    err = compare_fom_rom(fom, rom)
    dm = sc.build().dofmap
    return RunReport(ks, err.t, err.e_u, err.e_p, timings, basis_sizes,
                     {"u": dm.n_u, "p": dm.n_p, "total": dm.n_total},
                     cfg.fingerprint(), sc.fingerprint())


def cmd_compare(args, cfg) -> int:
    ks = _ks(args, cfg)
    d = _out_dir(cfg)
    fom, fmeta = load_trajectory(d / f"fom_{_tag(ks)}.npz")
    rom, rmeta = load_trajectory(d / f"rom_{_tag(ks)}.npz")
    if fmeta.get("scenario") != rmeta.get("scenario"):
        raise ConfigError("fom and rom trajectories come from different scenarios")
    if rom.n_steps > fom.n_steps:
        raise ConfigError("rom trajectory is longer than the fom trajectory")
    # stop-rule runs may end at different steps; compare the common prefix
    n = min(fom.n_steps, rom.n_steps)
    fom.states, rom.states = fom.states[:n + 1], rom.states[:n + 1]
    fom.wall, rom.wall = fom.wall[:n + 1], rom.wall[:n + 1]
    sc = cfg.scenario(ks)
    basis = _load_basis(cfg, sc.build().dofmap)
    rep = _report(cfg, sc, ks, fom, rom, basis.sizes,
                  {"fom": fom.total_wall, "online": rom.total_wall})
    j, c = emit_report(rep, d / f"compare_{_tag(ks)}")
    print(json.dumps({"max_e_u": float(rep.e_u.max()), "max_e_p": float(rep.e_p.max()),
                      "report": str(j), "table": str(c)}))
    return 0


def cmd_bench(args, cfg) -> int:
    ks = _ks(args, cfg)
    sc = cfg.scenario(ks)
    A = sc.build()
    basis = _load_basis(cfg, A.dofmap)
    init = _initial(cfg, A)
    fom = run_transient(A, init, cfg.scheme(), cfg.picard(), stop=cfg.stop_rule())
    rom = run_reduced(basis, A, init, cfg.scheme(), cfg.picard(), n_steps=fom.n_steps)
    rep = _report(cfg, sc, ks, fom, rom.trajectory, basis.sizes,
                  {"fom": fom.total_wall, "online": rom.wall})
    j, c = emit_report(rep, _out_dir(cfg) / f"bench_{_tag(ks)}")
    print(json.dumps({"speedup": rep.speedup, "max_e_u": float(rep.e_u.max()),
                      "max_e_p": float(rep.e_p.max()), "report": str(j)}))
    return 0


def cmd_mesh_info(args, cfg) -> int:
    sc = cfg.scenario()
    dm = sc.build().dofmap
    m = sc.mesh
    info = {"nodes": m.n_nodes, "triangles": m.n_triangles, "p2_nodes": dm.n_p2,
            "dofs": {"u": dm.n_u, "p": dm.n_p, "total": dm.n_total},
            "constrained": int(dm.constrained.size),
            "boundary_length": {t: boundary_measure(m, t) for t in m.tags},
            "mesh_hash": m.fingerprint()}
    print(json.dumps(info, indent=1))
    return 0


COMMANDS = {
    "fom": cmd_fom,
    "snapshots": cmd_snapshots,
    "build-rom": cmd_build_rom,
    "rom": cmd_rom,
    "compare": cmd_compare,
    "bench": cmd_bench,
    "mesh-info": cmd_mesh_info,
}


def cli(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PicardError, SingularMatrixError, SnapshotError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BasisArchiveError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, MeshError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
