# tests/test_acceptance.py - Default-parameter experiments (minutes to tens of minutes)
import json
from dataclasses import replace

import numpy as np
import pytest

from backend.config.parser import RunConfig
from backend.graph.workflow import run_pipeline
from backend.lagrangian.lyapunov import estimate_spectrum
from backend.spectral.integrator import sample_stationary
from backend.tools.utilities import streamed_trajectory

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]


def decorrelation_tau(config: RunConfig) -> float:
    """Energy decorrelation time at defaults, rounded up to the trajectory spacing and at least config.tau."""
    params = config.sim_params()
    sample = sample_stationary(params, config.forcing(), config.seed, config.burn_in, config.n_samples, config.gap)
    spacing = config.thin * params.dt
    steps = int(np.ceil(sample.autocorrelation_time / spacing))
    return max(config.tau, round(steps * spacing, 10))


@pytest.fixture(scope="module")
def default_spectrum():
    config = RunConfig(T=1000.0)
    traj = streamed_trajectory(config, config.T)
    return estimate_spectrum(traj, config.x0, config.T, config.renorm, config.batches, config.substeps)


@pytest.fixture(scope="module")
def default_tau():
    return decorrelation_tau(RunConfig())


@pytest.fixture(scope="module")
def density_run(tmp_path_factory, default_tau):
    out = tmp_path_factory.mktemp("density")
    state = run_pipeline("density", RunConfig(tau=default_tau, horizon=40), out)
    assert state["exit_code"] == 0
    return json.loads((out / "density.json").read_text())


def test_sum_rule_over_a_long_run(default_spectrum):
    assert abs(default_spectrum.lambda1 + default_spectrum.lambda2) < 1e-3


def test_top_exponent_is_positive_at_defaults(default_spectrum):
    # sign only; a straddling interval is a failed run
    assert default_spectrum.excludes_zero_from_below(), (
        f"lambda1 = {default_spectrum.lambda1:.4g} ± {default_spectrum.ci1:.2g} does not exclude 0"
    )


def test_symbolic_entropy_stays_below_lambda1(density_run):
    assert density_run["lambda1"] is not None
    assert density_run["symbolic_entropy"] <= max(density_run["lambda1"], 0.0) + 0.05
    assert density_run["notes"] == []


def test_hitting_density_is_positive(density_run):
    assert density_run["b_hat"] >= 0.1
    assert density_run["undetermined_count"] / density_run["horizon"] < 0.25


def test_full_horseshoe_on_most_seeds(tmp_path, default_tau):
    config = RunConfig(tau=default_tau)
    assert len(config.J) == 6
    full = 0
    for seed in SEEDS:
        out = tmp_path / f"seed_{seed}"
        state = run_pipeline("horseshoe", replace(config, seed=seed), out)
        assert state["exit_code"] in (0, 4)
        data = json.loads((out / "horseshoe.json").read_text())
        assert len(data["words"]) == 64
        # certificates survive re-integration at a 10x finer tracer step
        assert all(check["ok"] for check in data["verification"])
        if data["full_horseshoe"]:
            assert len(data["verification"]) == 3
            full += 1
    assert full >= 4
