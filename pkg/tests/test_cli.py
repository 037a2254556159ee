import json
import subprocess
import sys

import pytest

from damrom.cli import cli
from damrom.output import read_vtk_header

SMALL = """
[geometry]
n_levels = 3
[loading]
ramp_duration = 0.5
t_max = 1.5
[rom]
sweep = [1e-8, 1e-7]
[output]
field_cadence = 5
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.toml").write_text(SMALL)
    return d


def run(capsys, *argv):
    code = cli(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_mesh_info_default_config(capsys):
    code, out, _ = run(capsys, "mesh-info")
    info = json.loads(out)
    assert code == 0
    assert (info["nodes"], info["triangles"]) == (780, 1444)
    assert info["dofs"]["total"] == 6786


def test_rom_without_basis_exits_3(capsys, workspace):
    code, _, err = run(capsys, "rom", "--config", str(workspace / "small.toml"),
                       "--out", str(workspace / "empty"))
    assert code == 3 and "basis not found" in err


def test_config_errors_exit_1(capsys, workspace):
    bad = workspace / "bad.toml"
    bad.write_text("[numerics]\ntheta = 2.0\n")
    code, _, err = run(capsys, "mesh-info", "--config", str(bad))
    assert code == 1 and "config error" in err
    code, _, _ = run(capsys, "fom", "--ks", "-1", "--config", str(workspace / "small.toml"))
    assert code == 1
    with pytest.raises(SystemExit) as exc:
        cli(["no-such-command"])
    assert exc.value.code == 1


def test_missing_config_file_exits_3(capsys, workspace):
    code, _, err = run(capsys, "mesh-info", "--config", str(workspace / "absent.toml"))
    assert code == 3 and "I/O error" in err


def test_numerical_failure_exits_2(capsys, workspace):
    cfg = workspace / "stiff.toml"
    cfg.write_text(SMALL + "[numerics]\npicard_tol = 1e-30\npicard_max_iters = 2\n")
    code, _, err = run(capsys, "fom", "--config", str(cfg), "--out", str(workspace / "o2"))
    assert code == 2 and "numerical failure" in err


def test_full_pipeline(capsys, workspace):
    cfg, out = str(workspace / "small.toml"), str(workspace / "out")
    code, o, _ = run(capsys, "snapshots", "--config", cfg, "--out", out)
    assert code == 0 and json.loads(o)["runs"] == 2
    code, o, _ = run(capsys, "build-rom", "--config", cfg, "--out", out)
    sizes = json.loads(o)["sizes"]
    assert code == 0 and sizes["u"] >= 1 and sizes["p"] >= 1
    code, o, _ = run(capsys, "fom", "--config", cfg, "--out", out, "--ks", "2e-8")
    fom = json.loads(o)
    assert code == 0 and fom["n_steps"] >= 5
    code, o, _ = run(capsys, "rom", "--config", cfg, "--out", out, "--ks", "2e-8",
                     "--steps", str(fom["n_steps"]))
    assert code == 0 and json.loads(o)["n_steps"] == fom["n_steps"]
    code, o, _ = run(capsys, "compare", "--config", cfg, "--out", out, "--ks", "2e-8")
    cmp_ = json.loads(o)
    assert code == 0 and cmp_["max_e_p"] < 5e-2 and cmp_["max_e_u"] < 5e-2
    rows = (workspace / "out" / "compare_ks2e-08.csv").read_text().splitlines()
    assert len(rows) - 1 == fom["n_steps"]
    code, o, _ = run(capsys, "bench", "--config", cfg, "--out", out, "--ks", "2e-8")
    bench = json.loads(o)
    assert code == 0 and bench["speedup"] > 0
    report = json.loads((workspace / "out" / "bench_ks2e-08.json").read_text())
    assert report["scenario_fingerprint"] and report["dofs"]["total"] > 0
    vtk = sorted((workspace / "out" / "fields").glob("fom_*_0000?.vtk"))
    assert vtk and read_vtk_header(vtk[0])["cell_types"] == [5]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "damrom", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "mesh-info" in res.stdout
