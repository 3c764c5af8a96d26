import json
import subprocess
import sys

import pytest

from irhc.cli import main
from irhc.controller import RunRecord
from irhc.experiments import load_config
from irhc.plant import scalar_linear

SCALAR_CFG = {
    "plant": {"name": "scalar_linear", "a": 1.2, "b": 1.0},
    "x0": [1.5],
    "controller": {"mode": "irhc", "itec": True, "beta": 0.7, "C": 0.6, "N": 2, "max_steps": 60},
    "certify": {"ball_radius": 1.6, "directions": 8, "radii": 3},
}

SMALL_TABLE = {
    "plant": {"name": "oscillator", "dt": 0.05, "method": "euler"},
    "x0": [2.0, -1.0],
    "max_steps": 30,
    "stability_steps": 30,
    "horizons": [2],
    "betas": [0.8],
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "irhc", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "certify", "table1", "check-bounds"):
        assert cmd in out.stdout


@pytest.mark.parametrize("name", ["itec_oscillator.json", "rhc_n5.json", "table1.json", "certify.json"])
def test_shipped_configs_load(name):
    assert isinstance(load_config(name), dict)


def test_simulate_scalar(tmp_path):
    assert main(["simulate", "--config", write(tmp_path, SCALAR_CFG), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["converged"] and summary["status"] == "converged"
    assert all(e <= 0.6 + 1e-6 for e in summary["itec_window_energies"])
    trace = (tmp_path / "trace.csv").read_text()
    assert trace.splitlines()[0] == "k,x1,u1,h,gamma,i,terminal_bound,solver_status,stage_cost"
    rec = RunRecord.from_csv(trace, system=scalar_linear(1.2, 1.0))
    assert rec.total_cost == pytest.approx(summary["total_cost"], rel=1e-12)


def test_simulate_rejects_zero_steps(tmp_path, capsys):
    cfg = json.loads(json.dumps(SCALAR_CFG))
    cfg["controller"]["max_steps"] = 0
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "max_steps" in capsys.readouterr().err


@pytest.mark.parametrize("mutate", [
    lambda c: c["controller"].update(mode="dual"),
    lambda c: c["controller"].update(beta=1.2),
    lambda c: c["controller"].update(N=0),
    lambda c: c["plant"].update(name="pendulum"),
    lambda c: c.update(x0=[1.0, 2.0]),
    lambda c: c.pop("x0"),
    lambda c: c.update(solver={"bogus": 1}),
])
def test_configuration_errors(tmp_path, mutate):
    cfg = json.loads(json.dumps(SCALAR_CFG))
    mutate(cfg)
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_missing_and_malformed_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_controller_failure_exit_code(tmp_path):
    cfg = {
        "plant": {"name": "scalar_linear", "a": 1.1, "b": 1.0},
        "x0": [10.0],
        "input_set": {"kind": "box", "lower": [-0.1], "upper": [0.1]},
        "controller": {"mode": "irhc", "beta": 0.5, "C": 1.0, "N": 1, "max_steps": 5},
    }
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "aborted" and summary["error_step"] == 0


def test_certify_and_check_bounds_reuse_artifacts(tmp_path):
    cfg = write(tmp_path, SCALAR_CFG)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["certify", "--config", cfg, "--out", str(tmp_path), "--seed", "3"]) == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["all_feasible"] and cert["sigma"] > 0
    assert main(["check-bounds", "--config", cfg, "--out", str(tmp_path),
                 "--trace", str(tmp_path / "trace.csv"),
                 "--certificate", str(tmp_path / "certificate.json")]) == 0
    report = json.loads((tmp_path / "bounds_report.json").read_text())
    assert report["all_pass"]
    assert report["sigma"] == cert["sigma"]


def test_certify_seed_changes_samples(tmp_path):
    cfg = write(tmp_path, SCALAR_CFG)
    main(["certify", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["certify", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    main(["certify", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "1"])
    a, b, c = ((tmp_path / d / "certificate.json").read_text() for d in "abc")
    assert a == c and a != b


def test_check_bounds_needs_irhc(tmp_path):
    cfg = json.loads(json.dumps(SCALAR_CFG))
    cfg["controller"]["mode"] = "rhc"
    assert main(["check-bounds", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_small_table_is_deterministic(tmp_path):
    cfg = write(tmp_path, SMALL_TABLE)
    assert main(["table1", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["table1", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("table1.csv", "table1.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "table1.csv").read_text().splitlines()
    assert lines[0] == "cell,controller,N,beta,dt,status,cost,reference,rel_error"
    assert [l.split(",")[1] for l in lines[1:]] == ["feedback", "rhc", "irhc"]


@pytest.mark.slow
def test_simulate_shipped_itec_config(tmp_path):
    assert main(["simulate", "--config", "itec_oscillator.json", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["itec_window_energies"]
    assert max(summary["itec_window_energies"]) <= 4.8 + 1e-6


@pytest.mark.slow
def test_simulate_shipped_rhc_n5_diverges(tmp_path):
    assert main(["simulate", "--config", "rhc_n5.json", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["diverged"] and summary["status"] == "unstable"
