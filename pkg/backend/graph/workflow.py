# backend/graph/workflow.py - Subcommand dispatch and manifest lifecycle

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional
from typing_extensions import TypedDict

from backend.config.parser import RunConfig, validate
from backend.config.settings import DEFAULT_OUTPUT_DIR
from backend.errors import HorseshoeLabError
from backend.lagrangian.trajectory import resolve_eval_mode
from backend.storage.manifest import RunManifest
from backend.tools import run_advect, run_density, run_horseshoe, run_lyapunov, run_ou_check, run_simulate

logger = logging.getLogger(__name__)

Tool = Callable[[RunConfig, Path, RunManifest], Dict[str, Any]]

TOOLS: Dict[str, Tool] = {
    "simulate": run_simulate,
    "ou-check": run_ou_check,
    "advect": run_advect,
    "lyapunov": run_lyapunov,
    "horseshoe": run_horseshoe,
    "density": run_density,
}
SUBCOMMANDS = tuple(TOOLS)


class PipelineState(TypedDict, total=False):
    """What one run_pipeline call leaves behind."""
    subcommand: str
    out_dir: str
    manifest_digest: str
    exit_code: int
    outputs: List[str]
    summary: Dict[str, Any]
    error: Optional[str]


def build_manifest(subcommand: str, config: RunConfig) -> RunManifest:
    """Run identity from a validated config; forcing is omitted for unforced runs."""
    forced = not (subcommand == "simulate" and config.inviscid)
    return RunManifest(
        subcommand=subcommand,
        parameters={k: v for k, v in config.as_dict().items() if k not in ("seed", "workers")},
        forcing=config.forcing().to_manifest() if forced else None,
        seed=config.seed,
        eval_mode=resolve_eval_mode(config.eval_mode, config.N),
        workers=config.workers,
    )


def run_pipeline(
    subcommand: str,
    config: RunConfig,
    out_dir: Path | None = None,
    config_path: Path | None = None,
) -> PipelineState:
    """
    Validate, write the manifest, then run one subcommand.

    - The manifest is on disk before any compute starts
    - Lab errors are logged, appended to the manifest and mapped to their exit code
    - Anything else is logged with its traceback and maps to exit code 1

    Args:
        subcommand: one of SUBCOMMANDS
        config: run configuration
        out_dir: output directory (HORSESHOE_OUTPUT_DIR/<subcommand> by default)
        config_path: config file to list among the manifest inputs

    Returns:
        PipelineState with exit_code, outputs and summary
    """
    if subcommand not in TOOLS:
        raise ValueError(f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}")
    out_dir = Path(out_dir) if out_dir is not None else DEFAULT_OUTPUT_DIR / subcommand
    state: PipelineState = {"subcommand": subcommand, "out_dir": str(out_dir), "outputs": [], "error": None}

    try:
        validate(config)
        manifest = build_manifest(subcommand, config)
    except HorseshoeLabError as e:
        logger.error(f"✗ Invalid parameters for {subcommand}: {e}")
        manifest = RunManifest(subcommand=subcommand, parameters=config.as_dict(), seed=config.seed)
        manifest.fail(out_dir, f"{type(e).__name__}: {e}")
        state.update(exit_code=e.exit_code, error=str(e), manifest_digest=manifest.digest)
        return state

    if config_path is not None:
        manifest.add_input(Path(config_path))
    manifest.write(out_dir)
    state["manifest_digest"] = manifest.digest
    logger.info(f"Running {subcommand} into {out_dir} (manifest {manifest.digest[:12]})")

    try:
        result = TOOLS[subcommand](config, out_dir, manifest)
        state["outputs"] = result.get("outputs", [])
        state["summary"] = result.get("summary", {})
        manifest.complete(out_dir)
        state["exit_code"] = 0
        logger.info(f"✓ {subcommand} complete")
    except HorseshoeLabError as e:
        manifest.fail(out_dir, f"{type(e).__name__}: {e}")
        state["outputs"] = sorted(manifest.outputs)
        state.update(exit_code=e.exit_code, error=str(e))
    except Exception as e:
        logger.exception(f"✗ Unexpected error in {subcommand}")
        manifest.fail(out_dir, f"{type(e).__name__}: {e}")
        state["outputs"] = sorted(manifest.outputs)
        state.update(exit_code=1, error=str(e))
    return state
