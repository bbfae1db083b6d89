# backend/storage/manifest.py - Reproducibility manifest for one output directory
"""
One manifest.json per output directory. The run identity (subcommand,
parameters, forcing, versions, evaluation mode) is hashed into a digest
that every CSV and JSON output cites; timestamps and file digests are
recorded alongside but kept out of the identity so reruns reproduce it.
"""

import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pytz
import scipy

from backend.config.settings import SCHEME_VERSION, SOFTWARE_VERSION

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _utc_now() -> str:
    return datetime.now(pytz.UTC).isoformat()


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


@dataclass
class RunManifest:
    subcommand: str
    parameters: Dict
    forcing: Optional[Dict] = None
    seed: Optional[int] = None
    eval_mode: Optional[str] = None
    workers: int = 1
    software_version: str = SOFTWARE_VERSION
    scheme_version: str = SCHEME_VERSION
    created: str = field(default_factory=_utc_now)
    finished: Optional[str] = None
    status: str = "running"
    failure: Optional[str] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    environment: Dict[str, str] = field(default_factory=lambda: {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    })

    @property
    def identity(self) -> Dict:
        return {
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "forcing": self.forcing,
            "seed": self.seed,
            "eval_mode": self.eval_mode,
            "workers": self.workers,
            "software_version": self.software_version,
            "scheme_version": self.scheme_version,
        }

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.identity).encode()).hexdigest()

    def add_input(self, path: Path):
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: Path, out_dir: Path):
        path = Path(path)
        self.outputs[str(path.relative_to(out_dir))] = file_digest(path)

    def write(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        data = {"manifest_digest": self.digest, **self.identity}
        data.update({
            "created": self.created,
            "finished": self.finished,
            "status": self.status,
            "failure": self.failure,
            "environment": self.environment,
            "inputs": self.inputs,
            "outputs": self.outputs,
        })
        path = out_dir / MANIFEST_NAME
        path.write_text(json.dumps(data, indent=2, default=str) + "\n")
        return path

    def complete(self, out_dir: Path):
        self.status = "completed"
        self.finished = _utc_now()
        self.write(out_dir)
        logger.info(f"✓ Manifest {self.digest[:12]} completed")

    def fail(self, out_dir: Path, cause: str):
        """Record the failure cause; outputs written so far stay listed."""
        self.status = "failed"
        self.failure = cause
        self.finished = _utc_now()
        self.write(out_dir)
        logger.error(f"✗ Run failed: {cause}")


def load_manifest(out_dir: Path) -> Dict:
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text())
