# tests/test_storage.py - Output files, checkpoints and the manifest digest
import json

import numpy as np
import pandas as pd
import pytest

from backend.errors import ValidationError
from backend.spectral.integrator import simulate
from backend.storage.formats import CheckpointWriter, csv_digest, read_checkpoints, read_points, write_csv, write_json
from backend.storage.manifest import RunManifest


def test_csv_carries_digest_and_full_precision(tmp_path):
    path = write_csv(pd.DataFrame({"x": [1 / 3]}), tmp_path / "t.csv", "abc123")
    assert csv_digest(path) == "abc123"
    assert float(path.read_text().splitlines()[2]) == 1 / 3
    (tmp_path / "plain.csv").write_text("x\n1\n")
    with pytest.raises(ValidationError):
        csv_digest(tmp_path / "plain.csv")


def test_json_maps_non_finite_to_null(tmp_path):
    path = write_json({"ci": float("nan"), "n": np.int64(3)}, tmp_path / "s.json", "d")
    data = json.loads(path.read_text())
    assert data == {"manifest_digest": "d", "ci": None, "n": 3}


def test_checkpoints_round_trip(tmp_path, small_params, small_forcing):
    writer = CheckpointWriter(tmp_path)
    result = simulate(small_params, small_forcing, seed=1, T=0.02, thin=10, callbacks=[writer])
    writer.finish("d")
    states = read_checkpoints(tmp_path)
    assert [s.step for s in states] == [0, 10, 20]
    assert np.array_equal(states[-1].field.coeffs, result.states[-1].field.coeffs)
    with pytest.raises(ValidationError):
        read_checkpoints(tmp_path / "nowhere")


def test_read_points(tmp_path):
    (tmp_path / "p.csv").write_text("x1,x2\n0.5,1.0\n2.0,3.0\n")
    assert np.allclose(read_points(tmp_path / "p.csv"), [[0.5, 1.0], [2.0, 3.0]])
    (tmp_path / "bad.csv").write_text("1,2,3\n")
    with pytest.raises(ValidationError):
        read_points(tmp_path / "bad.csv")


def test_manifest_identity_ignores_timestamps(tmp_path):
    a = RunManifest("simulate", {"N": 4}, seed=1, created="2020-01-01T00:00:00+00:00")
    b = RunManifest("simulate", {"N": 4}, seed=1)
    assert a.digest == b.digest
    assert a.digest != RunManifest("simulate", {"N": 8}, seed=1).digest
    a.fail(tmp_path, "boom")
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["status"] == "failed"
    assert data["manifest_digest"] == a.digest
