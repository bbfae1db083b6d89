# tests/test_workflow.py - End-to-end subcommands through run_pipeline and the CLI
import json
from dataclasses import replace

import pytest

from backend.config.parser import RunConfig
from backend.graph.workflow import SUBCOMMANDS, build_manifest, run_pipeline
from backend.storage.formats import csv_digest, read_checkpoints, read_csv
from backend.storage.manifest import file_digest, load_manifest
from main import main


@pytest.fixture
def small_config():
    return RunConfig(N=4, M=16, T=0.2, burn_in=0.05, thin=10, grid=4, tau=0.1, renorm=5, batches=4,
                     window=5, stride=5, max_depth=5, J=[0, 1], horizon=3, cap=2)


def assert_outputs_cite_manifest(out_dir, digest):
    for path in out_dir.rglob("*.csv"):
        assert csv_digest(path) == digest, path
    for path in out_dir.rglob("*.json"):
        assert json.loads(path.read_text())["manifest_digest"] == digest, path


def test_subcommand_names():
    assert SUBCOMMANDS == ("simulate", "ou-check", "advect", "lyapunov", "horseshoe", "density")


def test_simulate_is_byte_reproducible(tmp_path, small_config):
    a = run_pipeline("simulate", small_config, tmp_path / "a")
    b = run_pipeline("simulate", small_config, tmp_path / "b")
    assert a["exit_code"] == b["exit_code"] == 0
    assert a["manifest_digest"] == b["manifest_digest"]
    for name in ("diagnostics.csv", "summary.json", "checkpoints/index.csv", "checkpoints/state_000010.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert_outputs_cite_manifest(tmp_path / "a", a["manifest_digest"])

    manifest = load_manifest(tmp_path / "a")
    assert manifest["status"] == "completed"
    assert manifest["outputs"]["diagnostics.csv"] == file_digest(tmp_path / "a" / "diagnostics.csv")
    assert len(read_checkpoints(tmp_path / "a")) == 21


def test_seed_changes_the_digest(tmp_path, small_config):
    a = build_manifest("simulate", small_config)
    b = build_manifest("simulate", replace(small_config, seed=1))
    assert a.digest != b.digest
    assert a.digest == build_manifest("simulate", small_config).digest


def test_inviscid_simulate_is_unforced(tmp_path, small_config):
    config = replace(small_config, inviscid=True, epsilon=0.0, scheme="lawson4", T=0.05)
    state = run_pipeline("simulate", config, tmp_path)
    assert state["exit_code"] == 0
    assert load_manifest(tmp_path)["forcing"] is None
    assert state["summary"]["relative_energy_drift"] < 1e-6


def test_overlapping_balls_fail_before_compute(tmp_path, small_config):
    config = replace(small_config, balls="1,1,0.5;1.5,1,0.5")
    state = run_pipeline("horseshoe", config, tmp_path)
    assert state["exit_code"] == 2
    assert [p.name for p in tmp_path.iterdir()] == ["manifest.json"]
    manifest = load_manifest(tmp_path)
    assert manifest["status"] == "failed"
    assert "disjoint" in manifest["failure"]


def test_ou_check_outputs(tmp_path, small_config):
    config = replace(small_config, N=1, M=4, ou_steps=500, burn_in=0.1)
    state = run_pipeline("ou-check", config, tmp_path)
    assert state["exit_code"] == 0
    data = json.loads((tmp_path / "ou_check.json").read_text())
    assert len(data["modes"]) == 8
    assert data["lag_steps"] == 10
    assert len(read_csv(tmp_path / "ou_check.csv")) == 8


def test_advect_outputs(tmp_path, small_config):
    state = run_pipeline("advect", small_config, tmp_path)
    assert state["exit_code"] == 0
    orbits = read_csv(tmp_path / "orbits.csv")
    assert len(orbits) == 16 * 21
    assert list(orbits.columns) == ["point", "time", "x1", "x2", "D11", "D12", "D21", "D22"]
    c2 = json.loads((tmp_path / "c2_diagnostics.json").read_text())
    assert c2["max_det_error"] < 1e-8
    assert (tmp_path / "mixing.csv").exists()
    assert_outputs_cite_manifest(tmp_path, state["manifest_digest"])


def test_lyapunov_outputs(tmp_path, small_config):
    state = run_pipeline("lyapunov", small_config, tmp_path)
    assert state["exit_code"] == 0
    data = json.loads((tmp_path / "lyapunov.json").read_text())
    assert abs(data["lambda1"] + data["lambda2"]) < 1e-3
    assert data["n_renorm"] == 4
    assert len(read_csv(tmp_path / "lyapunov.csv")) == 4
    assert (tmp_path / "directions.csv").exists()


def test_lyapunov_seed_ensemble(tmp_path, small_config):
    config = replace(small_config, seeds=[0, 1], workers=2)
    state = run_pipeline("lyapunov", config, tmp_path)
    assert state["exit_code"] == 0
    runs = read_csv(tmp_path / "runs.csv")
    assert list(runs["seed"]) == [0, 1]


def test_horseshoe_outputs(tmp_path, small_config):
    state = run_pipeline("horseshoe", small_config, tmp_path)
    # words still open at max_depth map to the budget exit code
    assert state["exit_code"] in (0, 4)
    data = json.loads((tmp_path / "horseshoe.json").read_text())
    assert len(data["words"]) == 4
    assert len(read_csv(tmp_path / "certificates.csv")) == 4
    assert_outputs_cite_manifest(tmp_path, state["manifest_digest"])


def test_density_outputs(tmp_path, small_config):
    state = run_pipeline("density", small_config, tmp_path)
    assert state["exit_code"] == 0
    data = json.loads((tmp_path / "density.json").read_text())
    assert data["horizon"] == 3
    assert 0.0 <= data["b_hat"] <= 1.0
    assert "symbolic_entropy" in data
    assert len(read_csv(tmp_path / "density.csv")) == 3


def test_cli_exit_codes(tmp_path):
    common = ["--set", "N=4", "--set", "M=16", "--set", "T=0.05", "--set", "burn_in=0.01"]
    assert main(["simulate", "--out", str(tmp_path / "ok"), "--seed", "3", *common]) == 0
    assert (tmp_path / "ok" / "diagnostics.csv").exists()
    assert (tmp_path / "ok" / "horseshoe.log").exists()
    assert main(["simulate", "--out", str(tmp_path / "bad"), "--set", "alpha=7"]) == 2
    assert main(["lyapunov", "--out", str(tmp_path / "unknown"), "--set", "viscosity=1"]) == 2
    with pytest.raises(SystemExit):
        main(["teleport"])
