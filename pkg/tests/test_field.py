# tests/test_field.py - Basis, evaluation, complex form and grid transforms
import numpy as np
import pytest

from backend.errors import AliasingError, InvalidIndexError, ValidationError
from backend.spectral.field import (
    ComplexVelocity,
    PhysicalPoint,
    SpectralVelocity,
    basis_eval,
    dumps_spectral,
    eval_gradient,
    eval_velocity,
    from_complex,
    grid_fit,
    grid_sample,
    grid_sample_gradient,
    loads_spectral,
    sobolev_norm,
    to_complex,
    torus_distance,
)
from tests.conftest import random_field


def test_basis_positive_and_negative_modes():
    x = np.array([0.3, 1.1])
    # (1, 0) is positive: k⊥ = (0, -1), sine profile
    assert basis_eval((1, 0), x) == pytest.approx([0.0, -np.sin(0.3)])
    # (-1, 0) is negative: k⊥ = (0, 1), cosine profile
    assert basis_eval((-1, 0), x) == pytest.approx([0.0, np.cos(-0.3)])
    # (1, 1): k⊥/|k| = (1, -1)/√2
    phase = 0.3 + 1.1
    assert basis_eval((1, 1), x) == pytest.approx(np.array([1.0, -1.0]) / np.sqrt(2) * np.sin(phase))


def test_basis_rejects_zero_index():
    with pytest.raises(InvalidIndexError):
        basis_eval((0, 0), [0.0, 0.0])


def test_basis_is_divergence_free_and_batched(rng):
    pts = rng.uniform(0, 2 * np.pi, size=(5, 2))
    values = basis_eval((2, -1), pts)
    assert values.shape == (5, 2)
    # e_k ∥ k⊥ everywhere
    assert np.allclose(values @ np.array([2.0, -1.0]), 0.0)


def test_eval_velocity_matches_basis_sum(rng):
    f = random_field(3, rng)
    pts = rng.uniform(0, 2 * np.pi, size=(7, 2))
    expected = sum(a * basis_eval(k, pts) for k, a in f.items())
    assert np.allclose(eval_velocity(f, pts), expected, atol=1e-12)
    assert eval_velocity(f, PhysicalPoint(1.0, 2.0)).shape == (2,)


def test_gradient_matches_finite_differences(rng):
    f = random_field(3, rng)
    x = np.array([0.7, 2.9])
    h = 1e-6
    G = eval_gradient(f, x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        column = (eval_velocity(f, x + e) - eval_velocity(f, x - e)) / (2 * h)
        assert np.allclose(G[:, j], column, atol=1e-7)
    assert np.trace(G) == pytest.approx(0.0, abs=1e-12)


def test_to_complex_single_mode():
    f = SpectralVelocity.from_modes(2, {(1, 0): 1.0})
    cv = to_complex(f)
    assert cv.coefficient((1, 0)) == pytest.approx(np.array([0.0, 0.5j]))
    assert cv.coefficient((-1, 0)) == pytest.approx(np.array([0.0, -0.5j]))


def test_complex_form_round_trip(rng):
    f = random_field(4, rng)
    back = from_complex(to_complex(f))
    assert np.allclose(back.coeffs, f.coeffs, atol=1e-14)


def test_from_complex_rejects_asymmetric_coefficients():
    U = np.zeros((2, 3, 3), dtype=complex)
    U[1, 2, 1] = 0.5j  # k = (1, 0) without its conjugate partner
    with pytest.raises(ValidationError):
        from_complex(ComplexVelocity(1, U))


def test_grid_sample_values_and_fit(rng):
    N, M = 3, 8
    f = random_field(N, rng)
    values = grid_sample(f, M)
    assert values.shape == (2, M, M)
    i, j = 5, 2
    point = np.array([2 * np.pi * i / M, 2 * np.pi * j / M])
    assert np.allclose(values[:, i, j], eval_velocity(f, point), atol=1e-12)
    assert np.allclose(grid_fit(values, N).coeffs, f.coeffs, atol=1e-12)

    grad = grid_sample_gradient(f, M)
    assert np.allclose(grad[:, :, i, j], eval_gradient(f, point), atol=1e-12)


def test_grid_too_small_aliases(rng):
    f = random_field(3, rng)
    with pytest.raises(AliasingError):
        grid_sample(f, 7)


def test_energy_enstrophy_and_sobolev():
    f = SpectralVelocity.from_modes(2, {(1, 0): 2.0, (1, 1): 1.0})
    assert f.energy == pytest.approx(0.5 * (4.0 + 1.0))
    assert f.enstrophy == pytest.approx(0.5 * (4.0 * 1 + 1.0 * 2))
    assert sobolev_norm(f, 1.0) == pytest.approx(np.sqrt(2 * 4.0 + 3 * 1.0))


def test_mode_outside_cutoff_rejected():
    with pytest.raises(InvalidIndexError):
        SpectralVelocity.from_modes(2, {(3, 0): 1.0})
    with pytest.raises(InvalidIndexError):
        SpectralVelocity(1, np.ones((3, 3)))


def test_spectral_text_format(rng):
    f = random_field(2, rng)
    text = dumps_spectral(f)
    assert text.startswith("N=2\n")
    assert len(text.strip().splitlines()) == 1 + 24
    assert np.array_equal(loads_spectral(text).coeffs, f.coeffs)


def test_torus_distance_wraps():
    assert torus_distance([0.1, 0.0], [2 * np.pi - 0.1, 0.0]) == pytest.approx(0.2)
