# backend/tools/horseshoe.py - `horseshoe` and `density` subcommands
import logging
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

from backend.config.parser import RunConfig
from backend.errors import BudgetExhaustedError, SumRuleError, ValidationError
from backend.horseshoe.certifier import BUDGET_EXHAUSTED, FlowOracle, certify_full_horseshoe, verify_certificate
from backend.horseshoe.density import estimate_hitting_density, symbolic_entropy_lower_bound
from backend.lagrangian.lyapunov import estimate_spectrum
from backend.storage.formats import write_csv, write_json
from backend.storage.manifest import RunManifest
from backend.tools.utilities import record, stored_trajectory

logger = logging.getLogger(__name__)

CERTIFICATE_COLUMNS = ["word", "status", "depth", "x1", "x2", "halfwidth", "min_margin", "max_lipschitz"]
VERIFIED_CERTIFICATES = 3


def _oracle(config: RunConfig, horizon_index: int) -> FlowOracle:
    if config.trajectory:
        logger.info(f"Using stored velocity path {config.trajectory}")
    traj = stored_trajectory(config, config.tau * max(horizon_index, 1))
    return FlowOracle(traj, config.tau, horizon_index, config.substeps, config.workers)


def certificate_table(report) -> pd.DataFrame:
    rows = []
    for r in report.results:
        cert = r.certificate
        rows.append({
            "word": r.word.label,
            "status": r.status,
            "depth": r.depth,
            "x1": cert.point.x1 if cert else None,
            "x2": cert.point.x2 if cert else None,
            "halfwidth": cert.halfwidth if cert else None,
            "min_margin": min(cert.margins.values()) if cert else None,
            "max_lipschitz": max(cert.lipschitz.values()) if cert else None,
        })
    return pd.DataFrame(rows, columns=CERTIFICATE_COLUMNS)


def run_horseshoe(config: RunConfig, out_dir: Path, manifest: RunManifest) -> Dict:
    """
    Certify all 2^|J| itineraries between the two balls.

    Outputs:
        horseshoe.json   - per-word status, certificates and the full-horseshoe verdict
        certificates.csv - one row per word

    Raises BudgetExhaustedError after writing the outputs if any word ran
    out of budget.
    """
    balls = config.ball_pair()
    oracle = _oracle(config, max(config.J))
    report = certify_full_horseshoe(balls, config.J, oracle, config.budget, config.max_depth, config.safety)

    verified = []
    for r in report.results:
        if r.certificate is None or len(verified) >= VERIFIED_CERTIFICATES:
            continue
        check = verify_certificate(r.certificate, balls, oracle)
        verified.append({"word": r.word.label, "ok": check.ok, "worst_ratio": check.worst_ratio})
        if not check.ok:
            logger.warning(f"✗ Certificate for word {r.word.label} lost margin on refinement ({check.worst_ratio:.2f})")

    data = report.to_dict()
    data["balls"] = balls.to_dict()
    data["verification"] = verified
    outputs = [
        record(manifest, out_dir, write_json(data, out_dir / "horseshoe.json", manifest.digest)),
        record(manifest, out_dir, write_csv(certificate_table(report), out_dir / "certificates.csv", manifest.digest)),
    ]
    counts = report.counts
    if counts[BUDGET_EXHAUSTED]:
        raise BudgetExhaustedError(
            f"{counts[BUDGET_EXHAUSTED]} of {len(report.results)} words ran out of budget ({config.budget} cells per word)"
        )
    return {"outputs": outputs, "summary": {"full_horseshoe": report.full_horseshoe, **counts}}


def _lambda1(config: RunConfig, oracle: FlowOracle) -> Optional[float]:
    """λ₁ along x0 over the oracle's velocity path, for the Pesin comparison."""
    traj = oracle.trajectory
    try:
        sp = estimate_spectrum(traj, config.x0, traj.n_segments * traj.spacing, config.renorm,
                               config.batches, config.substeps)
    except (SumRuleError, ValidationError) as e:
        logger.warning(f"Skipping the Pesin comparison: {e}")
        return None
    return sp.lambda1


def run_density(config: RunConfig, out_dir: Path, manifest: RunManifest) -> Dict:
    """
    Greedy full-horseshoe index set over n = horizon indices.

    Outputs:
        density.json - J, b_hat, undetermined indices, symbolic entropy vs λ₁
        density.csv  - per-index decision table
    """
    balls = config.ball_pair()
    oracle = _oracle(config, config.horizon - 1)
    report = estimate_hitting_density(balls, config.horizon, oracle, config.budget, config.cap,
                                      config.max_depth, config.safety)
    lambda1 = _lambda1(config, oracle)
    entropy = symbolic_entropy_lower_bound(report, lambda1)

    data = report.to_dict()
    data["symbolic_entropy"] = entropy
    data["lambda1"] = lambda1
    outputs = [
        record(manifest, out_dir, write_csv(report.table, out_dir / "density.csv", manifest.digest)),
        record(manifest, out_dir, write_json(data, out_dir / "density.json", manifest.digest)),
    ]
    return {"outputs": outputs, "summary": {"b_hat": report.density, "symbolic_entropy": entropy}}
