# backend/storage/formats.py - CSV, JSON and checkpoint files
import json
import logging
import math
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from backend.errors import ValidationError
from backend.spectral.field import dumps_spectral, loads_spectral
from backend.spectral.integrator import FlowState

logger = logging.getLogger(__name__)

DIGEST_PREFIX = "# manifest_digest="
FLOAT_FORMAT = "%.17g"
CHECKPOINT_DIR = "checkpoints"
CHECKPOINT_INDEX = "index.csv"


def write_csv(frame: pd.DataFrame, path: Path, digest: str) -> Path:
    """CSV with a leading '# manifest_digest=<hex>' line and full float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"{DIGEST_PREFIX}{digest}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def csv_digest(path: Path) -> str:
    with open(path) as f:
        first = f.readline().strip()
    if not first.startswith(DIGEST_PREFIX):
        raise ValidationError(f"{path} does not cite a manifest digest")
    return first[len(DIGEST_PREFIX):]


def _plain(value):
    """JSON-safe copy: numpy scalars unwrapped, NaN/inf mapped to null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(data: Dict, path: Path, digest: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"manifest_digest": digest, **_plain(data)}
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n")
    return path


class CheckpointWriter:
    """Callback for simulate: one spectral text file per stored state plus an index."""

    def __init__(self, out_dir: Path):
        self.directory = Path(out_dir) / CHECKPOINT_DIR
        self.directory.mkdir(parents=True, exist_ok=True)
        self.rows: List[Dict] = []

    def __call__(self, state: FlowState):
        index = len(self.rows)
        (self.directory / f"state_{index:06d}.txt").write_text(dumps_spectral(state.field))
        self.rows.append({"index": index, "step": state.step, "time": state.time})

    def finish(self, digest: str) -> Path:
        return write_csv(pd.DataFrame(self.rows, columns=["index", "step", "time"]),
                         self.directory / CHECKPOINT_INDEX, digest)


def read_checkpoints(directory: Path) -> List[FlowState]:
    """Load states written by CheckpointWriter; accepts a run directory or its checkpoints/ folder."""
    directory = Path(directory)
    if (directory / CHECKPOINT_DIR / CHECKPOINT_INDEX).exists():
        directory = directory / CHECKPOINT_DIR
    index_path = directory / CHECKPOINT_INDEX
    if not index_path.exists():
        raise ValidationError(f"no checkpoint index found under {directory}")
    index = read_csv(index_path)
    states = []
    for _, row in index.iterrows():
        text = (directory / f"state_{int(row['index']):06d}.txt").read_text()
        states.append(FlowState(time=float(row["time"]), field=loads_spectral(text), step=int(row["step"])))
    logger.info(f"Loaded {len(states)} checkpoints from {directory}")
    return states


def read_points(path: Path) -> np.ndarray:
    """Initial points from a CSV of 'x1,x2' rows (header optional)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"points file {path} does not exist")
    frame = pd.read_csv(path, comment="#", header=None)
    if frame.shape[1] != 2:
        raise ValidationError(f"points file must have two columns x1,x2, got {frame.shape[1]}")
    if str(frame.iloc[0, 0]).strip() == "x1":
        frame = frame.iloc[1:]
    try:
        return frame.astype(float).to_numpy()
    except ValueError:
        raise ValidationError(f"points file {path} contains non-numeric entries")
