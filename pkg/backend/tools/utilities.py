# backend/tools/utilities.py - Shared helpers for the subcommand tools
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from backend.config.parser import RunConfig
from backend.errors import ValidationError
from backend.lagrangian.trajectory import StoredTrajectory, StreamedTrajectory
from backend.spectral.field import SpectralVelocity, mode_geometry
from backend.spectral.forcing import ForcingSpec, NoiseStream
from backend.spectral.integrator import FlowState, SimParams, sample_stationary, stream_trajectory
from backend.storage.formats import read_checkpoints
from backend.storage.manifest import RunManifest

logger = logging.getLogger(__name__)


def record(manifest: RunManifest, out_dir: Path, path: Path) -> str:
    """Register an output file with the manifest; returns its name relative to out_dir."""
    manifest.add_output(path, out_dir)
    return str(Path(path).relative_to(out_dir))


def random_field(N: int, seed: int, energy: float = 1.0) -> SpectralVelocity:
    """Smooth random field with a_k ~ |k|^-3 spectrum, scaled to the given energy."""
    rng = np.random.default_rng(seed)
    ksq = mode_geometry(N).ksq
    with np.errstate(divide="ignore"):
        envelope = np.where(ksq > 0, ksq ** -1.5, 0.0)
    a = envelope * rng.standard_normal(ksq.shape)
    f = SpectralVelocity(N, a)
    return f * np.sqrt(energy / f.energy)


def stationary_start(config: RunConfig, params: SimParams, spec: ForcingSpec, seed: int) -> FlowState:
    """State after burn_in, taken from the same noise stream the run continues with."""
    sample = sample_stationary(params, spec, seed, config.burn_in, 1, config.gap)
    steps = int(round(sample.times[0] / params.dt))
    return FlowState(time=sample.times[0], field=sample.fields[0], step=steps)


def _steps(duration: float, params: SimParams, config: RunConfig) -> int:
    spacing_steps = config.thin
    n_segments = int(round(duration / (spacing_steps * params.dt)))
    if n_segments < 1 or abs(n_segments * spacing_steps * params.dt - duration) > 1e-9 * max(1.0, duration):
        raise ValidationError(f"duration {duration} must be a positive multiple of thin·dt = {spacing_steps * params.dt}")
    return n_segments


def stored_trajectory(config: RunConfig, duration: float, seed: Optional[int] = None,
                      params: Optional[SimParams] = None) -> StoredTrajectory:
    """
    Velocity path covering `duration` after burn-in: loaded from
    config.trajectory when set, otherwise regenerated from (params, seed).
    """
    if config.trajectory:
        states = read_checkpoints(Path(config.trajectory))
        traj = StoredTrajectory.from_states(states, config.eval_mode, config.interp_grid)
        traj.check_covers(0, traj.segments_for(duration))
        return traj

    params = params or config.sim_params()
    spec = config.forcing(params.N)
    seed = config.seed if seed is None else seed
    start = stationary_start(config, params, spec, seed)
    n_segments = _steps(duration, params, config)
    stream = NoiseStream(seed, params.dt)
    states = []
    for state in stream_trajectory(params, spec, stream, start.field, n_segments * config.thin, start.step):
        if (state.step - start.step) % config.thin == 0:
            states.append(state)
    logger.info(f"Regenerated {len(states)} velocity states (seed={seed}, spacing={config.thin * params.dt:g})")
    return StoredTrajectory.from_states(states, config.eval_mode, config.interp_grid)


def streamed_trajectory(config: RunConfig, duration: float, seed: Optional[int] = None,
                        params: Optional[SimParams] = None) -> StreamedTrajectory:
    """Forward-only path over `duration` after burn-in, co-integrated with the tracers."""
    params = params or config.sim_params()
    spec = config.forcing(params.N)
    seed = config.seed if seed is None else seed
    start = stationary_start(config, params, spec, seed)
    n_segments = _steps(duration, params, config)
    stream = NoiseStream(seed, params.dt)
    states = stream_trajectory(params, spec, stream, start.field, n_segments * config.thin, start.step)
    return StreamedTrajectory(
        states, config.thin * params.dt, params.N, n_segments, stride=config.thin,
        eval_mode=config.eval_mode, interp_grid=config.interp_grid,
    )
