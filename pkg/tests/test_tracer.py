# tests/test_tracer.py - Tracer and tangent integration on closed-form and stochastic paths
import numpy as np
import pytest

from backend.errors import ValidationError
from backend.lagrangian.trajectory import FrozenTrajectory, StoredTrajectory, StreamedTrajectory, resolve_eval_mode
from backend.lagrangian.tracer import (
    TangentState,
    TracerState,
    advect,
    advect_tangent,
    c2_growth_diagnostics,
    finite_difference_jacobian,
    flow_map,
    integrate_orbits,
    mixing_profile,
)
from backend.mock.synthetic import frozen_shear, shear_field, shear_flow_exact, shear_jacobian_exact, zero_trajectory
from backend.spectral.field import PhysicalPoint, SpectralVelocity, torus_distance
from backend.spectral.forcing import NoiseStream
from backend.spectral.integrator import simulate, stream_trajectory


def test_frozen_shear_is_integrated_exactly():
    a = 0.7
    traj = frozen_shear(a, spacing=0.1, n_segments=20)
    x0 = np.array([0.4, 1.3])
    x, D = flow_map(traj, x0, 1.0, jacobian=True)
    assert np.allclose(x, shear_flow_exact(x0, 1.0, a), atol=1e-12)
    assert np.allclose(D, shear_jacobian_exact(x0, 1.0, a), atol=1e-12)


def test_batch_and_single_point_agree():
    traj = frozen_shear(1.2, n_segments=10)
    pts = np.array([[0.1, 0.2], [3.0, 5.0], [6.0, 0.5]])
    batch = flow_map(traj, pts, 0.5)
    assert batch.shape == (3, 2)
    for p, image in zip(pts, batch):
        assert np.allclose(flow_map(traj, p, 0.5), image)


def test_identity_flow():
    traj = zero_trajectory(n_segments=5)
    x, D = flow_map(traj, [1.0, 2.0], 0.5, jacobian=True)
    assert np.allclose(x, [1.0, 2.0])
    assert np.allclose(D, np.eye(2))


def test_flow_beyond_trajectory_rejected():
    traj = frozen_shear(1.0, spacing=0.1, n_segments=5)
    with pytest.raises(ValidationError):
        flow_map(traj, [0.0, 0.0], 1.0)
    with pytest.raises(ValidationError):
        flow_map(traj, [0.0, 0.0], 0.25)


def test_advect_single_segment(small_params, small_forcing):
    result = simulate(small_params, small_forcing, seed=2, T=0.02, thin=10)
    s0, s1 = result.states[1], result.states[2]
    tr = TracerState(PhysicalPoint(1.0, 2.0), time=s0.time)
    moved = advect(tr, (s0, s1), substeps=2)
    assert moved.time == pytest.approx(s1.time)
    moved2, tg = advect_tangent(tr, TangentState(), (s0, s1), substeps=2)
    assert torus_distance(moved2.position.as_array(), moved.position.as_array()) < 1e-12
    assert tg.det_error < 1e-10
    with pytest.raises(ValidationError):
        advect(TracerState(PhysicalPoint(1.0, 2.0), time=0.0), (s0, s1))


def test_tangent_matches_finite_differences(stochastic_trajectory):
    traj = stochastic_trajectory
    for x0 in ([1.0, 2.0], [4.5, 0.3], [2.2, 5.9]):
        _, D = flow_map(traj, x0, 1.0, jacobian=True, substeps=2)
        J = finite_difference_jacobian(traj, x0, 1.0, h=1e-5, substeps=2)
        assert np.max(np.abs(D - J)) < 1e-4
        assert abs(np.linalg.det(D) - 1.0) < 1e-6


def test_cocycle_property(stochastic_trajectory):
    traj = stochastic_trajectory
    x0 = np.array([0.9, 3.3])
    direct, D = flow_map(traj, x0, 1.5, jacobian=True)
    mid, D1 = flow_map(traj, x0, 0.5, jacobian=True)
    end, D2 = flow_map(traj, mid, 1.0, jacobian=True, start_segment=traj.segments_for(0.5))
    assert torus_distance(direct, end) < 1e-10
    assert np.allclose(D, D2 @ D1, atol=1e-8)
    shifted = traj.shifted(traj.segments_for(0.5))
    assert np.allclose(flow_map(shifted, mid, 1.0), end, atol=1e-12)


def test_rk4_convergence_order(stochastic_trajectory):
    traj = stochastic_trajectory
    x0 = [2.0, 1.0]
    ref = flow_map(traj, x0, 1.0, substeps=32)
    err1 = torus_distance(flow_map(traj, x0, 1.0, substeps=2), ref)
    err2 = torus_distance(flow_map(traj, x0, 1.0, substeps=4), ref)
    assert 10 < err1 / err2 < 22


def test_grid_and_spectral_evaluation_agree(stochastic_trajectory):
    fields = [stochastic_trajectory.field(i) for i in range(11)]
    spacing = stochastic_trajectory.spacing
    spectral = StoredTrajectory(fields, spacing, eval_mode="spectral")
    grid = StoredTrajectory(fields, spacing, eval_mode="grid", interp_grid=256)
    x0 = [1.7, 4.1]
    a, Da = flow_map(spectral, x0, 0.1, jacobian=True)
    b, Db = flow_map(grid, x0, 0.1, jacobian=True)
    assert torus_distance(a, b) < 1e-6
    assert np.max(np.abs(Da - Db)) < 1e-4


def test_auto_eval_mode():
    assert resolve_eval_mode("auto", 16) == "spectral"
    assert resolve_eval_mode("auto", 48) == "grid"
    with pytest.raises(ValidationError):
        resolve_eval_mode("fast", 8)


def test_streamed_trajectory_matches_stored(small_params, small_forcing):
    stored = simulate(small_params, small_forcing, seed=4, T=0.2, thin=10)
    traj_a = StoredTrajectory.from_states(stored.states)
    states = stream_trajectory(small_params, small_forcing, NoiseStream(4, small_params.dt), None, 200)
    traj_b = StreamedTrajectory(states, 0.01, 4, n_segments=20, stride=10)
    x_a = flow_map(traj_a, [1.0, 1.0], 0.2)
    x_b = flow_map(traj_b, [1.0, 1.0], 0.2)
    assert np.array_equal(x_a, x_b)
    with pytest.raises(ValidationError):
        traj_b.field(0)


def test_det_preserved_on_long_run(stochastic_trajectory):
    batch = integrate_orbits(stochastic_trajectory, np.array([[0.5, 0.5], [3.0, 4.0]]), 200, substeps=2)
    assert batch.max_det_error < 1e-6


def test_c2_diagnostics_bound_holds(stochastic_trajectory):
    diag = c2_growth_diagnostics(stochastic_trajectory, resolution=8, horizon=1.0, substeps=2)
    assert diag.lhs <= diag.rhs + 1e-3
    assert diag.pathwise_margin >= -1e-3
    assert diag.n_points == 64
    assert diag.inverse_lhs >= 0.0


def test_shear_c2_diagnostics():
    a = 0.5
    traj = frozen_shear(a, spacing=0.1, n_segments=10)
    diag = c2_growth_diagnostics(traj, resolution=8, horizon=1.0)
    # ‖∇u‖ = a|cos x1|; its sup over the grid is a·cos(π/8)
    assert diag.rhs == pytest.approx(a * np.cos(np.pi / 8), rel=1e-9)
    assert diag.lhs <= diag.rhs


def test_mixing_profile_identity_never_mixes():
    traj = zero_trajectory(spacing=0.1, n_segments=5)
    profile = mixing_profile(traj, [np.pi, np.pi], 0.3, 0.5, n_points=500, bins=4)
    assert profile.mixing_time is None
    assert len(profile.table) == 6
    assert (profile.table["tv_distance"] > 0.5).all()


def test_frozen_trajectory_field_constant():
    f = shear_field(1.0, N=2)
    traj = FrozenTrajectory(f, spacing=0.2)
    assert traj.n_segments is None
    assert traj.field(17) is f
    assert isinstance(f, SpectralVelocity)
