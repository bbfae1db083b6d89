# Spectral init - Fields, forcing and the SPDE integrator
from .field import (
    PhysicalPoint,
    SpectralVelocity,
    ComplexVelocity,
    WaveIndex,
    basis_eval,
    eval_gradient,
    eval_velocity,
    from_complex,
    grid_fit,
    grid_sample,
    sobolev_norm,
    to_complex,
)
from .forcing import ForcingSpec, NoiseStream, build_forcing, sample_increments, shift_stream
from .integrator import (
    FlowState,
    SimParams,
    bilinear_term,
    ou_check,
    sample_stationary,
    simulate,
    step,
    stream_trajectory,
)

__all__ = [
    'PhysicalPoint', 'SpectralVelocity', 'ComplexVelocity', 'WaveIndex', 'basis_eval',
    'eval_gradient', 'eval_velocity', 'from_complex', 'grid_fit', 'grid_sample',
    'sobolev_norm', 'to_complex', 'ForcingSpec', 'NoiseStream', 'build_forcing',
    'sample_increments', 'shift_stream', 'FlowState', 'SimParams', 'bilinear_term',
    'ou_check', 'sample_stationary', 'simulate', 'step', 'stream_trajectory',
]
