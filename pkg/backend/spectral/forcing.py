# backend/spectral/forcing.py - Noise amplitudes and reproducible Wiener increments
"""
Additive white-in-time forcing Σ q_k e_k dW^k_t.

Amplitudes must satisfy
  - low-mode non-degeneracy: q_k > 0 for k = (±1, 0), (0, ±1);
  - high-mode non-degeneracy: alpha in (s+1, s+2) and, for every k with
    max(|k1|, |k2|) >= L, c_lo |k|^-alpha <= q_k <= c_hi |k|^-alpha.
The equivalence constants default to c_lo = c/10 and c_hi = 10c.

Increments come from numpy's Philox counter-based generator. The key is the
run seed; the step counter sits in the third 64-bit counter word, so every
(seed, step) pair owns a disjoint block of the generator. Within a step the
modes are drawn in shell order (max-norm 1, 2, ...), which makes the
increment of a mode independent of the cutoff N.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from backend.errors import ForcingValidationError, ValidationError
from backend.spectral.field import WaveIndex, mode_geometry

logger = logging.getLogger(__name__)

LOW_MODES = ((1, 0), (-1, 0), (0, 1), (0, -1))
EQUIVALENCE_BAND = (0.1, 10.0)
MIN_SOBOLEV_INDEX = 4.0
_SEED_LIMIT = 2**64
# Second key word; fixes the noise layout of this release.
_STREAM_TAG = 0x4E534E4F495345


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Noise amplitudes q_k on the retained modes plus the parameters they came from."""

    cutoff: int
    s: float
    alpha: float
    L: int
    c: float
    q: np.ndarray
    c_lo: float
    c_hi: float
    overrides: Tuple[Tuple[Tuple[int, int], float], ...] = ()

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        validate_forcing(self)

    def amplitude(self, k) -> float:
        k = k if isinstance(k, WaveIndex) else WaveIndex(*k)
        N = self.cutoff
        if k.sup_norm > N:
            return 0.0
        return float(self.q[k.k1 + N, k.k2 + N])

    def to_manifest(self) -> Dict:
        return {
            "N": self.cutoff,
            "s": self.s,
            "alpha": self.alpha,
            "L": self.L,
            "c": self.c,
            "c_lo": self.c_lo,
            "c_hi": self.c_hi,
            "overrides": [[list(k), v] for k, v in self.overrides],
        }

    @classmethod
    def from_manifest(cls, data: Mapping) -> "ForcingSpec":
        overrides = {tuple(k): float(v) for k, v in data.get("overrides", [])}
        band = (data["c_lo"] / data["c"], data["c_hi"] / data["c"]) if data.get("c") else EQUIVALENCE_BAND
        return build_forcing(
            int(data["N"]), float(data["s"]), float(data["alpha"]), int(data["L"]),
            float(data["c"]), overrides=overrides, band=band,
        )


def validate_forcing(spec: ForcingSpec) -> None:
    """Raise ForcingValidationError unless both non-degeneracy assumptions hold."""
    N = spec.cutoff
    if N < 1:
        raise ForcingValidationError(f"cutoff must be positive, got {N}", key="N")
    if not 1 <= spec.L <= N:
        raise ForcingValidationError(f"need N >= L >= 1, got N={N}, L={spec.L}", key="L")
    if spec.s < MIN_SOBOLEV_INDEX:
        raise ForcingValidationError(f"Sobolev index s must be >= 4, got {spec.s}", key="s")
    if not spec.s + 1 < spec.alpha < spec.s + 2:
        raise ForcingValidationError(
            f"high-mode non-degeneracy requires alpha in (s+1, s+2) = "
            f"({spec.s + 1:g}, {spec.s + 2:g}), got alpha={spec.alpha:g}",
            key="alpha",
        )
    if spec.c <= 0 or not 0 < spec.c_lo <= spec.c_hi:
        raise ForcingValidationError(f"need 0 < c_lo <= c_hi and c > 0, got c={spec.c}", key="c")

    q = spec.q
    if q.shape != (2 * N + 1, 2 * N + 1):
        raise ForcingValidationError(f"amplitude array has shape {q.shape}, expected N={N} layout", key="q")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ForcingValidationError("amplitudes must be finite and non-negative", key="q")
    if q[N, N] != 0.0:
        raise ForcingValidationError("the k = (0, 0) amplitude must be zero", key="q")

    for k1, k2 in LOW_MODES:
        if q[k1 + N, k2 + N] <= 0:
            raise ForcingValidationError(
                f"low-mode non-degeneracy requires q_k > 0 for k=({k1}, {k2})", key="q"
            )

    geo = mode_geometry(N)
    sup = np.maximum(np.abs(geo.k1), np.abs(geo.k2))
    band = sup >= spec.L
    kabs = np.sqrt(geo.ksq)
    kabs[N, N] = 1.0
    law = kabs ** (-spec.alpha)
    too_small = band & (q < spec.c_lo * law * (1 - 1e-12))
    too_large = band & (q > spec.c_hi * law * (1 + 1e-12))
    bad = too_small | too_large
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ForcingValidationError(
            f"q at k=({i - N}, {j - N}) = {q[i, j]:.3g} is outside "
            f"[{spec.c_lo:g}, {spec.c_hi:g}]·|k|^(-{spec.alpha:g}) required for max(|k1|,|k2|) >= L",
            key="q",
        )


def build_forcing(
    N: int,
    s: float = 4.0,
    alpha: float = 5.5,
    L: int = 1,
    c: float = 1.0,
    overrides: Optional[Mapping] = None,
    band: Tuple[float, float] = EQUIVALENCE_BAND,
) -> ForcingSpec:
    """
    Power-law amplitudes q_k = c·|k|^(-alpha) on every retained mode.

    Args:
        N: spectral cutoff
        s: Sobolev index of the phase space (>= 4)
        alpha: decay exponent, must lie in (s+1, s+2)
        L: threshold above which the power-law bounds are enforced
        c: overall amplitude
        overrides: optional {(k1, k2): q_k} replacing individual amplitudes
        band: equivalence constants relative to c

    Returns:
        validated ForcingSpec
    """
    geo = mode_geometry(N)
    kabs = np.sqrt(geo.ksq)
    kabs[N, N] = 1.0
    q = c * kabs ** (-float(alpha))
    q[N, N] = 0.0
    frozen_overrides = []
    for key, value in sorted((overrides or {}).items(), key=lambda kv: tuple(kv[0])):
        k = key if isinstance(key, WaveIndex) else WaveIndex(*key)
        if k.sup_norm > N:
            raise ForcingValidationError(f"override mode {(k.k1, k.k2)} exceeds cutoff N={N}", key="q")
        q[k.k1 + N, k.k2 + N] = float(value)
        frozen_overrides.append(((k.k1, k.k2), float(value)))
    spec = ForcingSpec(
        cutoff=int(N), s=float(s), alpha=float(alpha), L=int(L), c=float(c), q=q,
        c_lo=band[0] * c, c_hi=band[1] * c, overrides=tuple(frozen_overrides),
    )
    logger.debug(f"Forcing built: N={N}, s={s}, alpha={alpha}, L={L}, c={c}")
    return spec


def energy_injection_rate(spec: ForcingSpec) -> float:
    """½ Σ q_k², the mean energy input per unit time in coefficient space."""
    return 0.5 * float(np.sum(spec.q**2))


# ----------------------------
# Noise streams
# ----------------------------

@dataclass(frozen=True)
class NoiseStream:
    """Counter-addressed Wiener increments: seed, step size, and step offset."""

    seed: int
    dt: float
    origin: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if int(self.origin) < 0:
            raise ValidationError(f"stream origin must be non-negative, got {self.origin}")

    def generator(self, step: int) -> np.random.Generator:
        counter = (int(self.origin) + int(step)) << 128
        key = int(self.seed) | (_STREAM_TAG << 64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@lru_cache(maxsize=None)
def canonical_order(N: int) -> np.ndarray:
    """Flat grid positions of all retained modes, shell by shell."""
    size = 2 * N + 1
    order = []
    for shell in range(1, N + 1):
        shell_modes = [
            (k1, k2)
            for k2 in range(-shell, shell + 1)
            for k1 in range(-shell, shell + 1)
            if max(abs(k1), abs(k2)) == shell
        ]
        order.extend((k1 + N) * size + (k2 + N) for k1, k2 in shell_modes)
    arr = np.array(order, dtype=np.intp)
    arr.setflags(write=False)
    return arr


def increment_array(stream: NoiseStream, step: int, N: int) -> np.ndarray:
    """ΔW^k ~ Normal(0, dt) for every retained mode at one step, on the grid layout."""
    if step < 0:
        raise ValidationError(f"step must be non-negative, got {step}")
    order = canonical_order(N)
    draws = stream.generator(step).standard_normal(len(order)) * np.sqrt(stream.dt)
    out = np.zeros((2 * N + 1) ** 2)
    out[order] = draws
    return out.reshape(2 * N + 1, 2 * N + 1)


def sample_increments(spec: ForcingSpec, stream: NoiseStream, step: int) -> Dict[WaveIndex, float]:
    """
    Wiener increments of every retained mode at `step`.

    Deterministic in (seed, mode, step); the amplitude q_k is applied at the
    use site, not here.
    """
    N = spec.cutoff
    grid = increment_array(stream, step, N)
    return {
        WaveIndex(k1, k2): float(grid[k1 + N, k2 + N])
        for k1 in range(-N, N + 1)
        for k2 in range(-N, N + 1)
        if (k1, k2) != (0, 0)
    }


def shift_stream(stream: NoiseStream, t_steps: int) -> NoiseStream:
    """Stream whose increment at step m is the original increment at m + t_steps."""
    if t_steps < 0:
        raise ValidationError(f"shift must be non-negative, got {t_steps}")
    return replace(stream, origin=int(stream.origin) + int(t_steps))
