import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from fgpc.cli import main
from fgpc.config import load, violations

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))

SMALL_FIG5 = {
    "system": {"name": "duffing", "parameters": {"delta": 0.08, "alpha": 1.0, "beta": 1.0, "gamma": 0.2,
                                                  "Omega": 1.4},
               "uncertain": "alpha", "initial_state": [1.0, 0.0]},
    "distribution": {"family": "beta4", "params": [5, 5, 0.8, 1.2]},
    "discretization": {"H": 5, "N": 8},
    "solver": {"tol": 1e-10, "max_iter": 50},
    "deflation": {"enabled": True, "power": 2.0, "shift": 1.0},
    "analysis": {
        "branch": "all",
        "moments": {"n_time": 32},
        "summary": {"n_samples": 2000, "n_time": 32},
        "marginal": {"time": 2.0, "n_samples": 2000},
        "coefficient_grid": {},
        "phase_portrait": {"n_samples": 500, "n_time": 65},
        "mc_oracle": {"n_samples": 50, "n_time": 32},
    },
    "seed": 0,
}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


@pytest.fixture(scope="module")
def fig5_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("fig5")
    out = tmp / "run"
    code = main(["run", str(write_cfg(tmp, SMALL_FIG5)), "--out", str(out)])
    return code, out


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert "OK" in capsys.readouterr().out
    assert violations(load(path)) == []


def test_validate_reports_each_violation(tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL_FIG5))
    cfg["discretization"]["N_t"] = 10
    cfg["deflation"]["shift"] = -1.0
    assert main(["validate", str(write_cfg(tmp_path, cfg))]) == 1
    out = capsys.readouterr().out
    assert "2 violation(s)" in out
    assert "discretization/N_t: 10 violates the anti-aliasing rule N_t > 2H = 10" in out
    assert "deflation/shift: -1.0 violates the DeflationConfig invariant alpha_D > 0" in out
    # schema violations are reported before any semantic check
    cfg["analysis"]["bogus"] = {}
    assert main(["validate", str(write_cfg(tmp_path, cfg))]) == 1
    assert "'bogus' was unexpected" in capsys.readouterr().out


def test_semantic_checks(tmp_path):
    cfg = json.loads(json.dumps(SMALL_FIG5))
    cfg["system"]["uncertain"] = "mu"
    del cfg["distribution"]
    v = violations(cfg)
    assert any(s.startswith("system:") and "mu" in s for s in v)
    assert any(s.startswith("distribution: required") for s in v)
    vdp = {"system": {"name": "vanderpol"}, "distribution": {"family": "uniform", "params": [0.8, 1.2]},
           "discretization": {"H": 4, "N": 2}, "analysis": {"moments": {}}}
    assert any(s.startswith("analysis/moments") for s in violations(vdp))


def test_malformed_config_writes_nothing(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("system: [unclosed\n")
    out = tmp_path / "never"
    assert main(["run", str(p), "--out", str(out)]) == 1
    assert not out.exists()
    cfg = json.loads(json.dumps(SMALL_FIG5))
    cfg["discretization"]["N_t"] = 4
    assert main(["run", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 1
    assert not out.exists()
    assert "anti-aliasing" in capsys.readouterr().err
    assert [q.name for q in tmp_path.iterdir() if q.name.startswith(".")] == []


def test_refuses_foreign_directory(tmp_path):
    out = tmp_path / "busy"
    out.mkdir()
    (out / "precious.txt").write_text("keep")
    cfg = {"system": {"name": "duffing"}, "discretization": {"H": 1, "N": 0},
           "analysis": {"continuation": {"omega_range": [0.5, 0.6]}}}
    assert main(["run", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 1
    assert (out / "precious.txt").read_text() == "keep"


def test_fig5_artifacts(fig5_run):
    code, out = fig5_run
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["seed"] == 0
    assert man["diagnostics"]["deflation"]["roots"] == 3
    listed = set(man["artifacts"])
    on_disk = {p.name for p in out.iterdir()}
    assert listed | {"manifest.json"} == on_disk
    for label in ("branch0", "branch1", "branch2"):
        for stem in ("solution_{}.json", "moments_{}.csv", "summary_{}.csv", "marginal_{}.csv",
                     "marginal_{}.json", "coefficient_grid_{}.csv", "phase_portrait_{}.csv",
                     "mc_summary_{}.csv", "difference_{}.csv", "mc_oracle_{}.csv"):
            assert stem.format(label) in on_disk
    summ = read_csv(out / "summary_branch0.csv")
    assert summ[0][:4] == ["time", "mean_x0", "variance_x0", "lower_x0"] and len(summ) == 33
    mc = man["diagnostics"]["mc_oracle"]
    for label in ("branch0", "branch1", "branch2"):
        assert mc[label]["failures"] == 0
        assert mc[label]["max_abs_mean_difference"] < 1e-6


def test_run_is_deterministic(fig5_run, tmp_path):
    _, out = fig5_run
    out2 = tmp_path / "again"
    assert main(["run", str(write_cfg(tmp_path, SMALL_FIG5)), "--out", str(out2)]) == 0
    for p in out.iterdir():
        if p.name == "manifest.json":
            continue
        assert p.read_bytes() == (out2 / p.name).read_bytes(), p.name
    # a different seed changes the sampled statistics only
    out3 = tmp_path / "seed1"
    assert main(["run", str(write_cfg(tmp_path, SMALL_FIG5)), "--out", str(out3), "--seed", "1"]) == 0
    assert (out / "solution_branch0.json").read_bytes() == (out3 / "solution_branch0.json").read_bytes()
    assert (out / "summary_branch0.csv").read_bytes() != (out3 / "summary_branch0.csv").read_bytes()
    assert json.loads((out3 / "manifest.json").read_text())["seed"] == 1


def test_rerun_replaces_previous_run(tmp_path):
    cfg = {"system": {"name": "duffing"}, "discretization": {"H": 3, "N": 0},
           "analysis": {"continuation": {"omega_range": [0.5, 0.8]}}}
    out = tmp_path / "run"
    p = write_cfg(tmp_path, cfg)
    assert main(["run", str(p), "--out", str(out)]) == 0
    (out / "stale.csv").write_text("x")
    assert main(["run", str(p), "--out", str(out)]) == 0
    assert not (out / "stale.csv").exists()


def test_backbone_and_partial_exit(tmp_path, capsys):
    cfg = {"system": {"name": "duffing", "uncertain": "alpha"}, "discretization": {"H": 3, "N": 0},
           "analysis": {"continuation": {"omega_range": [0.5, 2.5], "parameter_values": [0.8, 1.2]}}}
    out = tmp_path / "bb"
    assert main(["run", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    doc = json.loads((out / "continuation.json").read_text())
    assert [b["file"] for b in doc["branches"]] == ["branch_alpha_0.8.csv", "branch_alpha_1.2.csv"]
    lo, hi = doc["common_three_solution_band"]
    assert 1.25 < lo < hi < 1.7
    rows = read_csv(out / "branch_alpha_0.8.csv")
    assert rows[0][0] == "Omega" and rows[0][-1] == "label"
    assert {r[-1] for r in rows[1:]} == {"stable", "unstable", "fold"}

    cfg["analysis"]["continuation"]["max_points"] = 20
    out = tmp_path / "partial"
    with pytest.warns(UserWarning, match="truncated"):
        code = main(["run", str(write_cfg(tmp_path, cfg)), "--out", str(out)])
    assert code == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 2 and len(man["partial_failures"]) == 2
    assert "truncated" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fgpc", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("fgpc ")
