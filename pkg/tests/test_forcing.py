# tests/test_forcing.py - Amplitude validation and reproducible increments
import numpy as np
import pytest

from backend.errors import ForcingValidationError, ValidationError
from backend.spectral.field import WaveIndex
from backend.spectral.forcing import (
    ForcingSpec,
    NoiseStream,
    build_forcing,
    energy_injection_rate,
    increment_array,
    sample_increments,
    shift_stream,
)


def test_power_law_amplitudes():
    spec = build_forcing(4, s=4, alpha=5.5, c=1.0)
    assert spec.amplitude((1, 0)) == pytest.approx(1.0)
    assert spec.amplitude((2, 1)) == pytest.approx(5 ** (-5.5 / 2))
    assert spec.amplitude((9, 0)) == 0.0


def test_alpha_outside_range_rejected():
    with pytest.raises(ForcingValidationError) as info:
        build_forcing(4, s=4, alpha=7)
    assert info.value.key == "alpha"
    assert "(5, 6)" in str(info.value)


def test_low_mode_degeneracy_rejected():
    with pytest.raises(ForcingValidationError):
        build_forcing(4, overrides={(0, -1): 0.0})


def test_high_mode_band_enforced():
    with pytest.raises(ForcingValidationError):
        build_forcing(4, overrides={(3, 3): 1.0})
    # below L the band is not enforced
    spec = build_forcing(4, L=3, overrides={(1, 1): 1.0})
    assert spec.amplitude((1, 1)) == 1.0


def test_small_sobolev_index_rejected():
    with pytest.raises(ForcingValidationError):
        build_forcing(4, s=3, alpha=4.5)


def test_manifest_round_trip():
    spec = build_forcing(3, alpha=5.2, c=0.5, L=2, overrides={(1, 1): 0.3})
    again = ForcingSpec.from_manifest(spec.to_manifest())
    assert np.array_equal(again.q, spec.q)


def test_energy_injection_rate():
    spec = build_forcing(2)
    assert energy_injection_rate(spec) == pytest.approx(0.5 * np.sum(spec.q**2))


def test_increments_deterministic():
    stream = NoiseStream(seed=42, dt=1e-3)
    a = increment_array(stream, 17, 4)
    assert np.array_equal(a, increment_array(NoiseStream(42, 1e-3), 17, 4))
    assert not np.array_equal(a, increment_array(stream, 18, 4))
    assert not np.array_equal(a, increment_array(NoiseStream(43, 1e-3), 17, 4))
    assert a[4, 4] == 0.0


def test_increment_of_a_mode_does_not_depend_on_cutoff():
    stream = NoiseStream(seed=3, dt=0.01)
    small = increment_array(stream, 5, 2)
    large = increment_array(stream, 5, 4)
    assert np.array_equal(small, large[2:7, 2:7])


def test_sample_increments_by_mode():
    spec = build_forcing(2)
    stream = NoiseStream(seed=1, dt=0.5)
    draws = sample_increments(spec, stream, 0)
    assert len(draws) == 24
    assert draws[WaveIndex(1, -2)] == increment_array(stream, 0, 2)[3, 0]


def test_increment_variance_is_dt():
    dt = 0.01
    stream = NoiseStream(seed=11, dt=dt)
    draws = np.concatenate([increment_array(stream, n, 1).ravel() for n in range(2000)])
    draws = draws[draws != 0.0]
    assert len(draws) == 2000 * 8
    assert np.var(draws) / dt == pytest.approx(1.0, rel=0.05)
    assert abs(np.mean(draws)) < 4 * np.sqrt(dt / len(draws))


def test_shift_stream():
    stream = NoiseStream(seed=9, dt=1e-3)
    shifted = shift_stream(stream, 10)
    assert np.array_equal(increment_array(shifted, 3, 2), increment_array(stream, 13, 2))
    with pytest.raises(ValidationError):
        shift_stream(stream, -1)


def test_seed_range():
    with pytest.raises(ValidationError):
        NoiseStream(seed=-1, dt=1e-3)


def test_increments_are_uncorrelated_across_modes_and_steps():
    dt = 1e-3
    stream = NoiseStream(seed=5, dt=dt)
    grid = np.array([increment_array(stream, n, 1).ravel() for n in range(100_000)])
    draws = grid[:, grid.any(axis=0)]
    assert draws.shape == (100_000, 8)

    corr = np.corrcoef(draws, rowvar=False)
    off_diagonal = corr[~np.eye(8, dtype=bool)]
    assert np.max(np.abs(off_diagonal)) < 0.02
    lagged = np.corrcoef(draws[:-1], draws[1:], rowvar=False)[:8, 8:]
    assert np.max(np.abs(lagged)) < 0.02

    assert np.allclose(draws.var(axis=0) / dt, 1.0, rtol=0.05)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * np.sqrt(dt / len(draws)))
