# tests/conftest.py - Shared fixtures: small cutoffs and short stochastic paths
import numpy as np
import pytest

from backend.spectral.field import SpectralVelocity, mode_geometry
from backend.spectral.forcing import build_forcing
from backend.spectral.integrator import SimParams, simulate
from backend.lagrangian.trajectory import StoredTrajectory


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale experiments (minutes)")


def random_field(N, rng, decay=2.0):
    """Random field with a_k ~ |k|^-decay."""
    ksq = mode_geometry(N).ksq
    with np.errstate(divide="ignore"):
        envelope = np.where(ksq > 0, ksq ** (-decay / 2.0), 0.0)
    return SpectralVelocity(N, envelope * rng.standard_normal(ksq.shape))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params():
    return SimParams(epsilon=0.1, dt=1e-3, N=4, M=16)


@pytest.fixture
def small_forcing():
    return build_forcing(4)


@pytest.fixture
def stochastic_trajectory(small_params, small_forcing):
    """Velocity path over [0, 2] with spacing 0.01 (N = 4), started from rest after a short spin-up."""
    result = simulate(small_params, small_forcing, seed=7, T=2.0, thin=10)
    return StoredTrajectory.from_states(result.states)
