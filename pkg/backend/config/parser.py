# backend/config/parser.py - `key = value` run configuration
"""
Run configuration: plain `key = value` lines, '#' starts a comment.
Precedence is defaults < config file < CLI overrides. Unknown keys,
duplicate keys and unparseable values raise ConfigError naming the key.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from backend.config.settings import DEFAULT_WORKERS
from backend.errors import ConfigError, ForcingValidationError, ValidationError
from backend.horseshoe.certifier import BallPair
from backend.spectral.forcing import ForcingSpec, build_forcing
from backend.spectral.integrator import SCHEMES, SimParams

logger = logging.getLogger(__name__)

DEFAULT_BALLS = f"{np.pi / 2!r},{np.pi / 2!r},0.5;{3 * np.pi / 2!r},{3 * np.pi / 2!r},0.5"


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _point(text: str) -> Tuple[float, float]:
    parts = [float(v) for v in text.replace(" ", "").split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'x1,x2', got {text!r}")
    return parts[0], parts[1]


@dataclass
class RunConfig:
    """Every run parameter, with its default."""

    # SPDE
    epsilon: float = 0.1
    dt: float = 1e-3
    N: int = 16
    M: int = 64
    T: float = 10.0
    seed: int = 0
    alpha: float = 5.5
    s: float = 4.0
    L: int = 1
    c: float = 1.0
    burn_in: float = 5.0
    thin: int = 10
    scheme: str = "euler"
    nonlinear: bool = True
    inviscid: bool = False
    # stationary sampling and OU check
    n_samples: int = 20
    gap: float = 1.0
    ou_steps: int = 100_000
    # tracers
    substeps: int = 1
    eval_mode: str = "auto"
    interp_grid: int = 256
    grid: int = 32
    points: str = ""
    trajectory: str = ""
    # Lyapunov
    x0: Tuple[float, float] = (1.0, 2.0)
    renorm: int = 10
    batches: int = 20
    window: int = 100
    stride: int = 10
    sweep: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    # horseshoe and density
    balls: str = DEFAULT_BALLS
    J: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    tau: float = 1.0
    budget: int = 200_000
    max_depth: int = 12
    safety: float = 1.5
    horizon: int = 40
    cap: int = 6
    # execution
    workers: int = DEFAULT_WORKERS

    def sim_params(self) -> SimParams:
        return SimParams(self.epsilon, self.dt, self.N, self.M, self.nonlinear, self.scheme, self.inviscid)

    def forcing(self, N: Optional[int] = None) -> ForcingSpec:
        return build_forcing(N or self.N, self.s, self.alpha, self.L, self.c)

    def ball_pair(self) -> BallPair:
        return BallPair.parse(self.balls)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["x0"] = list(self.x0)
        return out


_CASTERS: Dict[str, Callable[[str], object]] = {}
for _f in fields(RunConfig):
    if _f.name in ("sweep", "seeds", "J"):
        _CASTERS[_f.name] = _int_list
    elif _f.name == "x0":
        _CASTERS[_f.name] = _point
    elif _f.type in ("bool", bool):
        _CASTERS[_f.name] = _bool
    elif _f.type in ("int", int):
        _CASTERS[_f.name] = int
    elif _f.type in ("float", float):
        _CASTERS[_f.name] = float
    else:
        _CASTERS[_f.name] = str

KNOWN_KEYS = tuple(_CASTERS)


def _cast(key: str, raw: str):
    if key not in _CASTERS:
        raise ConfigError(key, f"unknown key (known keys: {', '.join(KNOWN_KEYS)})")
    try:
        return _CASTERS[key](raw.strip())
    except ValueError as e:
        raise ConfigError(key, f"cannot parse {raw.strip()!r}: {e}")


def parse_lines(text: str) -> Dict[str, str]:
    """Ordered raw `key = value` pairs of a config text."""
    pairs: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        pairs[key] = value
    return pairs


def validate(config: RunConfig) -> RunConfig:
    """Range checks; forcing and grid constraints are delegated to their modules."""
    positive = ("epsilon", "dt", "T", "burn_in", "gap", "tau", "safety")
    for key in positive:
        if key == "epsilon" and config.inviscid:
            continue
        if not getattr(config, key) > 0:
            raise ConfigError(key, f"{key} must be positive")
    if config.inviscid and config.epsilon < 0:
        raise ConfigError("epsilon", "epsilon must be non-negative")
    at_least_one = ("N", "thin", "n_samples", "ou_steps", "substeps", "interp_grid", "grid",
                    "renorm", "batches", "window", "stride", "budget", "horizon", "cap", "workers")
    for key in at_least_one:
        if getattr(config, key) < 1:
            raise ConfigError(key, f"{key} must be a positive integer")
    if not 0 <= config.seed < 2**64:
        raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
    if config.scheme not in SCHEMES:
        raise ConfigError("scheme", f"scheme must be one of {SCHEMES}")
    if config.eval_mode not in ("auto", "spectral", "grid"):
        raise ConfigError("eval_mode", "eval_mode must be auto, spectral or grid")
    if config.M <= 3 * config.N:
        raise ConfigError("M", f"M must exceed 3N = {3 * config.N} for alias-free products")
    if config.interp_grid < 2 * config.N + 2:
        raise ConfigError("interp_grid", f"interp_grid must be at least 2N + 2 = {2 * config.N + 2}")
    if not 0 <= config.max_depth <= 30:
        raise ConfigError("max_depth", "max_depth must lie in [0, 30]")
    if not config.J or any(b <= a for a, b in zip(config.J, config.J[1:])) or config.J[0] < 0:
        raise ConfigError("J", "J must be a non-empty, strictly increasing list of non-negative integers")
    if len(config.J) > 12:
        raise ConfigError("J", "|J| must not exceed 12")
    if any(n < 1 for n in config.sweep):
        raise ConfigError("sweep", "sweep cutoffs must be positive")
    if any(s < 0 for s in config.seeds):
        raise ConfigError("seeds", "seeds must be non-negative")

    try:
        config.forcing()
    except ForcingValidationError as e:
        key = e.key if e.key in KNOWN_KEYS else "c"
        raise ConfigError(key, str(e))
    try:
        config.ball_pair()
    except ValidationError as e:
        raise ConfigError("balls", str(e))
    return config


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Build a validated RunConfig.

    Args:
        text: config file contents (may be empty)
        overrides: CLI `key=value` strings applied after the file

    Returns:
        RunConfig with every key set
    """
    values = {}
    for key, raw in parse_lines(text).items():
        values[key] = _cast(key, raw)
    for key, raw in (overrides or {}).items():
        values[key] = _cast(key, str(raw))
    config = RunConfig(**values)
    if "M" not in values and "N" in values:
        config.M = max(config.M, 4 * config.N)
    return validate(config)


def load_config(path: Optional[Path], overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    text = ""
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("config", f"file {path} does not exist")
        text = path.read_text()
        logger.info(f"Loaded config from {path}")
    return parse_config(text, overrides)
