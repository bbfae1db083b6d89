# backend/tools/lyapunov.py - `lyapunov` subcommand: exponents, entropy, directions, sweeps
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List

import pandas as pd
from joblib import Parallel, delayed

from backend.config.parser import RunConfig
from backend.lagrangian.lyapunov import (
    directions_table,
    estimate_directions,
    estimate_spectrum,
    pesin_entropy,
)
from backend.storage.formats import write_csv, write_json
from backend.storage.manifest import RunManifest
from backend.tools.utilities import record, stored_trajectory, streamed_trajectory

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["N", "seed", "lambda1", "ci1", "lambda2", "ci2", "sum", "pesin_entropy", "T"]


def _trajectory(config: RunConfig, seed=None, params=None):
    if config.trajectory:
        return stored_trajectory(config, config.T)
    return streamed_trajectory(config, config.T, seed, params)


def _single_run(config: RunConfig, N: int, seed: int) -> Dict:
    """One (cutoff, seed) cell of a sweep; M is raised to 4N when needed."""
    params = replace(config, N=N, M=max(config.M, 4 * N)).sim_params()
    traj = streamed_trajectory(config, config.T, seed, params)
    sp = estimate_spectrum(traj, config.x0, config.T, config.renorm, config.batches, config.substeps)
    return {"N": N, "seed": seed, "sum": sp.sum, **sp.summary()}


def run_lyapunov(config: RunConfig, out_dir: Path, manifest: RunManifest) -> Dict:
    """
    Lyapunov exponents of the tracer started at x0 over [0, T] after burn-in.

    Outputs:
        lyapunov.csv   - running estimates (time, lambda1, lambda2, sum)
        lyapunov.json  - final lambda1, ci1, lambda2, ci2, pesin_entropy, T
        directions.csv - finite-time unstable/stable directions along the orbit
        runs.csv       - one row per (N, seed) when sweep or seeds is set
    """
    if config.trajectory:
        manifest.add_input(Path(config.trajectory) / "checkpoints" / "index.csv")

    sp = estimate_spectrum(_trajectory(config), config.x0, config.T, config.renorm, config.batches, config.substeps)
    outputs = [record(manifest, out_dir, write_csv(sp.history, out_dir / "lyapunov.csv", manifest.digest))]
    summary = sp.summary()
    summary["excludes_zero"] = bool(sp.excludes_zero_from_below())
    summary["n_renorm"] = sp.n_renorm
    outputs.append(record(manifest, out_dir, write_json(summary, out_dir / "lyapunov.json", manifest.digest)))

    # a fresh pass over the same path; the streamed one is spent
    traj = _trajectory(config)
    n_steps = traj.segments_for(config.T)
    if n_steps >= 2 * config.window:
        frames = estimate_directions(traj, config.x0, config.window, config.T, config.stride,
                                     substeps=config.substeps)
        outputs.append(record(manifest, out_dir, write_csv(directions_table(frames),
                                                           out_dir / "directions.csv", manifest.digest)))
    else:
        logger.warning(f"T covers {n_steps} segments, fewer than 2·window = {2 * config.window}; no directions")

    if config.sweep or config.seeds:
        cutoffs: List[int] = config.sweep or [config.N]
        seeds: List[int] = config.seeds or [config.seed]
        logger.info(f"Running {len(cutoffs) * len(seeds)} ensemble members on {config.workers} workers")
        rows = Parallel(n_jobs=config.workers)(
            delayed(_single_run)(config, N, seed) for N in cutoffs for seed in seeds
        )
        runs = pd.DataFrame(rows)[RUN_COLUMNS]
        outputs.append(record(manifest, out_dir, write_csv(runs, out_dir / "runs.csv", manifest.digest)))

    logger.info(f"✓ lyapunov finished: lambda1={sp.lambda1:.4g}, h_Pesin={pesin_entropy(sp):.4g}")
    return {"outputs": outputs, "summary": summary}
