# Lagrangian init - Velocity trajectories, tracers and Lyapunov analysis
from .trajectory import FrozenTrajectory, StoredTrajectory, StreamedTrajectory, VelocityTrajectory
from .tracer import (
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
from .lyapunov import (
    DirectionFrame,
    LyapunovAccumulator,
    Spectrum,
    accumulate_qr,
    estimate_directions,
    estimate_spectrum,
    finite_time_directions,
    pesin_entropy,
)

__all__ = [
    'FrozenTrajectory', 'StoredTrajectory', 'StreamedTrajectory', 'VelocityTrajectory',
    'TangentState', 'TracerState', 'advect', 'advect_tangent', 'c2_growth_diagnostics',
    'finite_difference_jacobian', 'flow_map', 'integrate_orbits', 'mixing_profile',
    'DirectionFrame', 'LyapunovAccumulator', 'Spectrum', 'accumulate_qr',
    'estimate_directions', 'estimate_spectrum', 'finite_time_directions', 'pesin_entropy',
]
