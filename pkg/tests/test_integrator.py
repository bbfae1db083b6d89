# tests/test_integrator.py - SPDE stepping, conservation and OU statistics
import numpy as np
import pytest
from scipy import signal

from backend.errors import AliasingError, NumericalInstabilityError, ValidationError
from backend.spectral.field import SpectralVelocity
from backend.spectral.forcing import NoiseStream, build_forcing, energy_injection_rate
from backend.spectral.integrator import (
    FlowState,
    SimParams,
    bilinear_term,
    integrated_autocorrelation_time,
    ou_check,
    sample_stationary,
    simulate,
    step,
)
from backend.tools.utilities import random_field as smooth_field
from tests.conftest import random_field


def test_params_validation():
    with pytest.raises(AliasingError):
        SimParams(N=16, M=48)
    with pytest.raises(ValidationError, match="dt must be positive"):
        SimParams(dt=-1)
    with pytest.raises(ValidationError):
        SimParams(epsilon=0.0)
    assert SimParams(epsilon=0.0, inviscid=True).epsilon == 0.0


def test_bilinear_term_is_energy_skew(rng):
    params = SimParams(N=16, M=64)
    for decay in (1.0, 2.0):
        for _ in range(50):
            f = random_field(16, rng, decay=decay)
            inner = float(np.sum(bilinear_term(f, params).coeffs * f.coeffs))
            assert abs(inner) < 1e-10 * np.sum(f.coeffs**2)


def test_single_mode_is_a_steady_euler_solution():
    params = SimParams(N=3, M=10)
    f = SpectralVelocity.from_modes(3, {(2, 1): 1.5})
    assert np.allclose(bilinear_term(f, params).coeffs, 0.0, atol=1e-13)


def test_unforced_single_mode_decays_exponentially():
    params = SimParams(epsilon=0.1, dt=1e-2, N=2, M=8)
    f = SpectralVelocity.from_modes(2, {(1, 1): 1.0})
    state = FlowState(0.0, f)
    for _ in range(100):
        state = step(state, params, None, None)
    assert state.step == 100
    assert state.time == pytest.approx(1.0)
    assert state.field.amplitude((1, 1)) == pytest.approx(np.exp(-0.1 * 2 * 1.0), rel=1e-12)


def test_inviscid_energy_drift():
    params = SimParams(epsilon=0.0, dt=1e-3, N=4, M=16, scheme="lawson4", inviscid=True)
    u0 = smooth_field(4, seed=3)
    result = simulate(params, None, seed=0, T=1.0, thin=100, u0=u0)
    e0 = result.diagnostics["energy"].iloc[0]
    e1 = result.diagnostics["energy"].iloc[-1]
    assert e0 == pytest.approx(1.0)
    assert abs(e1 - e0) / e0 < 1e-6


def test_simulate_is_deterministic_and_thinned(small_params, small_forcing):
    a = simulate(small_params, small_forcing, seed=5, T=0.01, thin=3)
    b = simulate(small_params, small_forcing, seed=5, T=0.01, thin=3)
    c = simulate(small_params, small_forcing, seed=6, T=0.01, thin=3)
    assert [s.step for s in a.states] == [0, 3, 6, 9, 10]
    assert list(a.diagnostics.columns) == ["time", "energy", "enstrophy", "hs_norm"]
    assert np.array_equal(a.states[-1].field.coeffs, b.states[-1].field.coeffs)
    assert not np.array_equal(a.states[-1].field.coeffs, c.states[-1].field.coeffs)


def test_simulate_rejects_non_multiple_T(small_params, small_forcing):
    with pytest.raises(ValidationError):
        simulate(small_params, small_forcing, seed=0, T=0.0105)


def test_step_checks_stream_dt(small_params, small_forcing):
    state = FlowState(0.0, SpectralVelocity.zeros(4))
    with pytest.raises(ValidationError):
        step(state, small_params, small_forcing, NoiseStream(0, 2e-3))


def test_blow_up_reports_step_and_partial_states():
    params = SimParams(epsilon=0.01, dt=1.0, N=4, M=16, scheme="euler")
    u0 = smooth_field(4, seed=1, energy=1e4)
    with pytest.raises(NumericalInstabilityError) as info:
        simulate(params, None, seed=0, T=200.0, u0=u0)
    assert info.value.step is not None
    assert info.value.mode is not None
    assert len(info.value.partial) >= 1


def test_ou_variance_matches_closed_form():
    # linear mode k=(1,0), ε=0.1, q=0.5: stationary variance 0.25/(2·0.1) = 1.25
    params = SimParams(epsilon=0.1, dt=2.0, N=1, M=4)
    spec = build_forcing(1, c=0.5)
    table = ou_check(params, spec, seed=2024, n_steps=100_000, burn_in=100.0, lag=1)
    row = table[(table.k1 == 1) & (table.k2 == 0)].iloc[0]
    assert row.analytic_var == pytest.approx(1.25)
    assert row.empirical_var == pytest.approx(1.25, rel=0.05)
    assert (table.rel_error < 0.05).all()
    assert np.allclose(table.empirical_acf, table.analytic_acf, atol=0.03)


def test_autocorrelation_time_of_ar1():
    rng = np.random.default_rng(0)
    rho = 0.9
    x = signal.lfilter([1.0], [1.0, -rho], rng.standard_normal(1_000_000))
    # τ = (1 + ρ)/(1 - ρ) = 19
    assert integrated_autocorrelation_time(x) == pytest.approx(19.0, rel=0.1)


def test_sample_stationary_spacing(small_params, small_forcing):
    sample = sample_stationary(small_params, small_forcing, seed=1, burn_in=0.05, n_samples=3, gap=0.02)
    assert sample.times == pytest.approx([0.05, 0.07, 0.09])
    assert len(sample.fields) == 3
    assert sample.energy_mean > 0



def test_stationary_samples_agree_across_seed_sets():
    params = SimParams(epsilon=0.5, dt=1e-2, N=2, M=8)
    spec = build_forcing(2)

    def per_seed(seeds):
        samples = [sample_stationary(params, spec, seed, burn_in=5.0, n_samples=11, gap=1.0) for seed in seeds]
        energies = np.array([s.energy_mean for s in samples])
        modes = np.array([np.mean([f.coeffs for f in s.fields], axis=0) for s in samples])
        return energies, modes

    energy_a, modes_a = per_seed(range(0, 12))
    energy_b, modes_b = per_seed(range(100, 112))
    sem_a = energy_a.std(ddof=1) / np.sqrt(len(energy_a))
    sem_b = energy_b.std(ddof=1) / np.sqrt(len(energy_b))
    assert abs(energy_a.mean() - energy_b.mean()) < 3 * np.hypot(sem_a, sem_b)

    # every mode is centred; unforced modes stay at zero
    modes = np.concatenate([modes_a, modes_b])
    sem = modes.std(axis=0, ddof=1) / np.sqrt(len(modes))
    assert np.all(np.abs(modes.mean(axis=0)) <= 4 * sem + 1e-12)


@pytest.mark.slow
def test_dissipation_balances_injection():
    params = SimParams(epsilon=0.5, dt=1e-3, N=4, M=16)
    spec = build_forcing(4)
    result = simulate(params, spec, seed=11, T=400.0, thin=100)
    stationary = result.diagnostics[result.diagnostics["time"] >= 20.0]
    # ε Σ|k|² a_k² = 2ε·enstrophy
    dissipation = 2 * params.epsilon * stationary["enstrophy"].mean()
    assert dissipation / energy_injection_rate(spec) == pytest.approx(1.0, rel=0.1)
