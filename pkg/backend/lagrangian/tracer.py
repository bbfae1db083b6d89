# backend/lagrangian/tracer.py - Tracer and tangent integration along a velocity trajectory
"""
dx/dt = u_t(x), dD/dt = ∇u_t(x)·D, D(0) = I.

Every substep is one classical RK4 step applied jointly to (x, D), with the
velocity linearly interpolated in time inside each trajectory segment.
The tangent part of RK4 is the exact derivative of the position map, so
the Jacobians agree with finite differences of flow_map to O(h²).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import trapezoid

from backend.errors import ValidationError
from backend.spectral.field import PhysicalPoint, TWO_PI, _as_points, torus_displacement, wrap
from backend.lagrangian.trajectory import StoredTrajectory, VelocityTrajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TracerState:
    position: PhysicalPoint
    time: float = 0.0


@dataclass(frozen=True, eq=False)
class TangentState:
    """Jacobian of the flow map; unimodular up to integration error."""

    D: np.ndarray = field(default_factory=lambda: np.eye(2))

    @property
    def det_error(self) -> float:
        return abs(float(np.linalg.det(self.D)) - 1.0)


@dataclass
class OrbitBatch:
    """Result of integrate_orbits for P initial points."""

    positions: np.ndarray  # (P, 2), wrapped
    jacobians: Optional[np.ndarray]  # (P, 2, 2)
    times: List[float] = field(default_factory=list)
    history: List[np.ndarray] = field(default_factory=list)  # positions at each recorded node
    jacobian_history: List[np.ndarray] = field(default_factory=list)

    @property
    def max_det_error(self) -> float:
        if self.jacobians is None:
            return 0.0
        return float(np.max(np.abs(np.linalg.det(self.jacobians) - 1.0)))


def _rk4_substep(traj: VelocityTrajectory, x, D, segment: int, theta0: float, theta1: float, h: float):
    mid = 0.5 * (theta0 + theta1)
    tangent = D is not None
    k1x, g1 = traj.velocity(x, segment, theta0, tangent)
    x2 = x + 0.5 * h * k1x
    k2x, g2 = traj.velocity(x2, segment, mid, tangent)
    x3 = x + 0.5 * h * k2x
    k3x, g3 = traj.velocity(x3, segment, mid, tangent)
    x4 = x + h * k3x
    k4x, g4 = traj.velocity(x4, segment, theta1, tangent)
    x_new = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    if not tangent:
        return x_new, None
    k1D = g1 @ D
    k2D = g2 @ (D + 0.5 * h * k1D)
    k3D = g3 @ (D + 0.5 * h * k2D)
    k4D = g4 @ (D + h * k3D)
    D_new = D + h / 6.0 * (k1D + 2.0 * k2D + 2.0 * k3D + k4D)
    return x_new, D_new


def integrate_orbits(
    trajectory: VelocityTrajectory,
    points,
    n_segments: int,
    substeps: int = 1,
    jacobian: bool = True,
    start_segment: int = 0,
    jacobians0: Optional[np.ndarray] = None,
    record: bool = False,
) -> OrbitBatch:
    """
    Advance a batch of tracers through `n_segments` trajectory segments.

    Args:
        trajectory: velocity path
        points: (P, 2) initial positions (or a single point)
        n_segments: number of segments to cross
        substeps: RK4 steps per segment
        jacobian: also integrate the variational equation
        start_segment: first segment index
        jacobians0: initial tangent frames (P, 2, 2), identity by default
        record: keep positions (and Jacobians) after every substep

    Returns:
        OrbitBatch with final wrapped positions and Jacobians
    """
    if substeps < 1:
        raise ValidationError(f"substeps must be a positive integer, got {substeps}")
    trajectory.check_covers(start_segment, n_segments)
    x, _ = _as_points(points)
    x = x.copy()
    D = None
    if jacobian:
        if jacobians0 is None:
            D = np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy()
        else:
            D = np.array(jacobians0, dtype=float).reshape(len(x), 2, 2)

    h = trajectory.spacing / substeps
    t0 = trajectory.start_time + start_segment * trajectory.spacing
    batch = OrbitBatch(positions=x, jacobians=D)
    if record:
        batch.times.append(t0)
        batch.history.append(wrap(x))
        if jacobian:
            batch.jacobian_history.append(D.copy())

    for seg in range(start_segment, start_segment + n_segments):
        for sub in range(substeps):
            x, D = _rk4_substep(trajectory, x, D, seg, sub / substeps, (sub + 1) / substeps, h)
            x = wrap(x)
            if record:
                batch.times.append(t0 + (seg - start_segment) * trajectory.spacing + (sub + 1) * h)
                batch.history.append(x.copy())
                if jacobian:
                    batch.jacobian_history.append(D.copy())

    batch.positions = x
    batch.jacobians = D
    return batch


def _segment_trajectory(segment) -> StoredTrajectory:
    first, second = segment
    return StoredTrajectory.from_states([first, second])


def advect(tr: TracerState, segment, substeps: int = 1) -> TracerState:
    """One trajectory segment (a pair of consecutive FlowStates) of tracer motion."""
    traj = _segment_trajectory(segment)
    if abs(tr.time - traj.start_time) > 1e-9 * max(1.0, abs(tr.time)):
        raise ValidationError(f"tracer time {tr.time} is not at the segment start {traj.start_time}")
    batch = integrate_orbits(traj, tr.position.as_array(), 1, substeps, jacobian=False)
    x1, x2 = batch.positions[0]
    return TracerState(PhysicalPoint(x1, x2), tr.time + traj.spacing)


def advect_tangent(tr: TracerState, tg: TangentState, segment, substeps: int = 1) -> Tuple[TracerState, TangentState]:
    traj = _segment_trajectory(segment)
    if abs(tr.time - traj.start_time) > 1e-9 * max(1.0, abs(tr.time)):
        raise ValidationError(f"tracer time {tr.time} is not at the segment start {traj.start_time}")
    batch = integrate_orbits(traj, tr.position.as_array(), 1, substeps, jacobians0=tg.D[None])
    x1, x2 = batch.positions[0]
    return TracerState(PhysicalPoint(x1, x2), tr.time + traj.spacing), TangentState(batch.jacobians[0])


def flow_map(trajectory: VelocityTrajectory, x0, t: float, jacobian: bool = False,
             substeps: int = 1, start_segment: int = 0):
    """
    φ_t(x0) over the trajectory, starting at `start_segment`.

    Returns the image point(s), plus the Jacobian(s) when requested. A
    single point gives a (2,) array (and a (2, 2) Jacobian); a batch gives
    (P, 2) (and (P, 2, 2)).
    """
    pts, single = _as_points(x0)
    n = trajectory.segments_for(t)
    batch = integrate_orbits(trajectory, pts, n, substeps, jacobian, start_segment)
    x = batch.positions[0] if single else batch.positions
    if not jacobian:
        return x
    D = batch.jacobians[0] if single else batch.jacobians
    return x, D


def finite_difference_jacobian(trajectory: VelocityTrajectory, x0, t: float, h: float = 1e-5,
                               substeps: int = 1, start_segment: int = 0) -> np.ndarray:
    """Central differences of flow_map, with torus-aware displacements."""
    if not 0 < h < 0.1:
        raise ValidationError(f"finite-difference step must lie in (0, 0.1), got {h}")
    base, _ = _as_points(x0)
    base = base[0]
    stencil = np.array([base + [h, 0.0], base - [h, 0.0], base + [0.0, h], base - [0.0, h]])
    images = flow_map(trajectory, stencil, t, substeps=substeps, start_segment=start_segment)
    J = np.empty((2, 2))
    J[:, 0] = torus_displacement(images[1], images[0]) / (2.0 * h)
    J[:, 1] = torus_displacement(images[3], images[2]) / (2.0 * h)
    return J


# ----------------------------
# Growth diagnostics
# ----------------------------

@dataclass
class C2Diagnostics:
    """Both sides of the Gronwall bound log‖Dφ₁‖ <= ∫ sup‖∇u_t‖ dt on a sample grid."""

    lhs: float  # log⁺ sup_x ‖Dφ_t(x)‖
    rhs: float  # ∫ sup_x ‖∇u_s‖ ds
    margin: float
    pathwise_margin: float  # min over orbits of ∫‖∇u(φ_s x)‖ds - log‖Dφ_t(x)‖
    second_order: float  # sup_x ‖∂²φ_t‖ proxy from differences of Jacobians
    inverse_lhs: float  # log⁺ sup_x ‖(Dφ_t)⁻¹‖
    horizon: float
    n_points: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sample_grid(resolution: int) -> np.ndarray:
    """Cell-centred resolution x resolution grid on the torus, shape (R², 2)."""
    if resolution < 1:
        raise ValidationError(f"grid resolution must be positive, got {resolution}")
    ticks = (np.arange(resolution) + 0.5) * (TWO_PI / resolution)
    X1, X2 = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([X1.ravel(), X2.ravel()])


def _opnorm(G: np.ndarray) -> np.ndarray:
    return np.linalg.norm(G, ord=2, axis=(-2, -1))


def c2_growth_diagnostics(trajectory: VelocityTrajectory, resolution: int = 16, horizon: float = 1.0,
                          substeps: int = 1, h: float = 1e-4, start_segment: int = 0) -> C2Diagnostics:
    """
    Pathwise growth check of the time-`horizon` flow on a sample grid.

    The supremum of ‖∇u_s‖ at each time node is taken over the fixed grid
    together with the orbit positions, so it dominates every orbit's own
    integral; the quadrature in time is the trapezoid rule on substep nodes.
    """
    grid = sample_grid(resolution)
    n_seg = trajectory.segments_for(horizon)
    batch = integrate_orbits(trajectory, grid, n_seg, substeps, start_segment=start_segment, record=True)

    path_norms, sup_norms = [], []
    for node, positions in enumerate(batch.history):
        seg = start_segment + node // substeps
        theta = (node % substeps) / substeps
        _, g_orbit = trajectory.velocity(positions, seg, theta, gradient=True)
        _, g_grid = trajectory.velocity(grid, seg, theta, gradient=True)
        on_orbit = _opnorm(g_orbit)
        path_norms.append(on_orbit)
        sup_norms.append(max(float(on_orbit.max()), float(_opnorm(g_grid).max())))

    times = np.array(batch.times) - batch.times[0]
    path_integral = trapezoid(np.array(path_norms), times, axis=0)
    rhs = float(trapezoid(np.array(sup_norms), times)) if len(times) > 1 else 0.0

    D = batch.jacobians
    norms = _opnorm(D)
    log_norms = np.log(np.maximum(norms, 1.0))
    lhs = float(log_norms.max())
    inv_norms = norms / np.abs(np.linalg.det(D))
    inverse_lhs = float(np.log(max(inv_norms.max(), 1.0)))
    pathwise_margin = float(np.min(path_integral - np.log(norms))) if len(times) > 1 else 0.0

    second = 0.0
    if n_seg > 0:
        stencil = np.concatenate([grid + [h, 0.0], grid - [h, 0.0], grid + [0.0, h], grid - [0.0, h]])
        _, Dp = flow_map(trajectory, stencil, horizon, jacobian=True, substeps=substeps, start_segment=start_segment)
        P = len(grid)
        d1 = np.linalg.norm((Dp[:P] - Dp[P:2 * P]) / (2 * h), axis=(-2, -1))
        d2 = np.linalg.norm((Dp[2 * P:3 * P] - Dp[3 * P:]) / (2 * h), axis=(-2, -1))
        second = float(np.max(np.maximum(d1, d2)))

    result = C2Diagnostics(
        lhs=lhs, rhs=rhs, margin=rhs - lhs, pathwise_margin=pathwise_margin,
        second_order=second, inverse_lhs=inverse_lhs, horizon=horizon, n_points=len(grid),
    )
    logger.debug(f"C2 diagnostics: lhs={lhs:.4g}, rhs={rhs:.4g}, second order proxy={second:.4g}")
    return result


@dataclass
class MixingProfile:
    table: pd.DataFrame  # time, tv_distance, chi2_pvalue
    mixing_time: Optional[float]
    threshold: float


def mixing_profile(trajectory: VelocityTrajectory, center, radius: float, horizon: float,
                   n_points: int = 4000, bins: int = 8, threshold: float = 0.1,
                   substeps: int = 1, seed: int = 0) -> MixingProfile:
    """
    Spread of a tracer cloud started uniformly in a small ball.

    After each segment the cloud is binned on a bins x bins partition; the
    table reports the total-variation distance to the uniform law and the
    χ² goodness-of-fit p-value. The mixing time is the first time the TV
    distance falls below `threshold`.
    """
    if not 0 < radius < np.pi:
        raise ValidationError(f"radius must lie in (0, π), got {radius}")
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random(n_points))
    angle = TWO_PI * rng.random(n_points)
    c, _ = _as_points(center)
    cloud = wrap(c[0] + np.column_stack([r * np.cos(angle), r * np.sin(angle)]))

    n_seg = trajectory.segments_for(horizon)
    batch = integrate_orbits(trajectory, cloud, n_seg, substeps, jacobian=False, record=True)
    rows = []
    expected = n_points / bins**2
    for k in range(0, len(batch.history), substeps):
        x = batch.history[k]
        counts, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=bins, range=[[0, TWO_PI], [0, TWO_PI]])
        counts = counts.ravel()
        tv = 0.5 * float(np.sum(np.abs(counts / n_points - 1.0 / bins**2)))
        pvalue = float(stats.chisquare(counts, np.full_like(counts, expected)).pvalue)
        rows.append({"time": batch.times[k] - batch.times[0], "tv_distance": tv, "chi2_pvalue": pvalue})
    table = pd.DataFrame(rows, columns=["time", "tv_distance", "chi2_pvalue"])
    below = table[table["tv_distance"] < threshold]
    mixing_time = float(below["time"].iloc[0]) if len(below) else None
    if mixing_time is None:
        logger.warning(f"Cloud did not mix below TV {threshold} within {horizon} time units")
    return MixingProfile(table=table, mixing_time=mixing_time, threshold=threshold)
