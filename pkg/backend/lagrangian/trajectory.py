# backend/lagrangian/trajectory.py - Velocity trajectories seen by tracers
"""
Tracers read the velocity through a trajectory object: a sequence of
spectral states spaced `spacing` apart, linearly interpolated in time
within each segment.

  StoredTrajectory   - random access over stored states, supports the Wiener shift
  FrozenTrajectory   - one field held constant in time (oracles and controls)
  StreamedTrajectory - forward-only view over a state generator, so long
                       tangent runs co-integrate with the SPDE without storage

Field evaluation at particle positions runs in one of two modes:
  spectral - exact trigonometric summation (default for N <= 32)
  grid     - spectral upsampling to an interp_grid x interp_grid mesh, then
             periodic cubic splines (scipy.ndimage)
"""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict, deque
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from backend.errors import ValidationError
from backend.spectral.field import (
    SpectralVelocity,
    TWO_PI,
    _as_points,
    evaluate_coefficients,
    gradient_coefficients,
    grid_sample,
    grid_sample_gradient,
)

logger = logging.getLogger(__name__)

EVAL_MODES = ("auto", "spectral", "grid")
SPECTRAL_AUTO_CUTOFF = 32
DEFAULT_INTERP_GRID = 256
_CACHE_SIZE = 32


# ----------------------------
# Evaluators
# ----------------------------

class SpectralEvaluator:
    """Exact evaluation of u and ∇u from the retained modes."""

    def __init__(self, f: SpectralVelocity):
        self.cutoff = f.cutoff
        self._velocity = f.vector_coeffs
        self._stack = np.concatenate([f.vector_coeffs, gradient_coefficients(f).reshape(4, *f.vector_coeffs.shape[1:])])

    def evaluate(self, points: np.ndarray, gradient: bool = False) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if not gradient:
            return evaluate_coefficients(self._velocity, points, self.cutoff).T, None
        values = evaluate_coefficients(self._stack, points, self.cutoff)
        return values[:2].T, values[2:].T.reshape(-1, 2, 2)


class GridEvaluator:
    """Periodic cubic-spline interpolation of u and ∇u sampled on a fine grid."""

    def __init__(self, f: SpectralVelocity, interp_grid: int = DEFAULT_INTERP_GRID):
        self.size = int(interp_grid)
        samples = np.concatenate([grid_sample(f, self.size), grid_sample_gradient(f, self.size).reshape(4, self.size, self.size)])
        self._coeffs = np.stack([ndimage.spline_filter(s, order=3, mode="grid-wrap") for s in samples])

    def _interpolate(self, components: Iterable[int], coords: np.ndarray) -> np.ndarray:
        return np.stack([
            ndimage.map_coordinates(self._coeffs[c], coords, order=3, mode="grid-wrap", prefilter=False)
            for c in components
        ])

    def evaluate(self, points: np.ndarray, gradient: bool = False) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        coords = (np.mod(points, TWO_PI) * (self.size / TWO_PI)).T
        if not gradient:
            return self._interpolate(range(2), coords).T, None
        values = self._interpolate(range(6), coords)
        return values[:2].T, values[2:].T.reshape(-1, 2, 2)


def resolve_eval_mode(mode: str, N: int) -> str:
    if mode not in EVAL_MODES:
        raise ValidationError(f"eval_mode must be one of {EVAL_MODES}, got {mode!r}")
    if mode == "auto":
        return "spectral" if N <= SPECTRAL_AUTO_CUTOFF else "grid"
    return mode


def make_evaluator(f: SpectralVelocity, mode: str = "auto", interp_grid: int = DEFAULT_INTERP_GRID):
    if resolve_eval_mode(mode, f.cutoff) == "spectral":
        return SpectralEvaluator(f)
    return GridEvaluator(f, interp_grid)


# ----------------------------
# Trajectories
# ----------------------------

class VelocityTrajectory:
    """Base class: state i sits at time start_time + i·spacing."""

    def __init__(self, spacing: float, cutoff: int, eval_mode: str = "auto",
                 interp_grid: int = DEFAULT_INTERP_GRID, start_time: float = 0.0):
        if not spacing > 0:
            raise ValidationError(f"trajectory spacing must be positive, got {spacing}")
        self.spacing = float(spacing)
        self.cutoff = int(cutoff)
        self.eval_mode = resolve_eval_mode(eval_mode, self.cutoff)
        self.interp_grid = int(interp_grid)
        self.start_time = float(start_time)
        self._cache: "OrderedDict[int, object]" = OrderedDict()
        self._lock = threading.Lock()

    @property
    def n_segments(self) -> Optional[int]:
        """Number of segments, or None if unbounded."""
        raise NotImplementedError

    def field(self, index: int) -> SpectralVelocity:
        raise NotImplementedError

    def _cache_key(self, index: int) -> int:
        return index

    def evaluator(self, index: int):
        key = self._cache_key(index)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        ev = make_evaluator(self.field(index), self.eval_mode, self.interp_grid)
        with self._lock:
            self._cache[key] = ev
            while len(self._cache) > _CACHE_SIZE:
                self._cache.popitem(last=False)
        return ev

    def check_covers(self, start_segment: int, n_segments: int):
        if start_segment < 0 or n_segments < 0:
            raise ValidationError("segment range must be non-negative")
        total = self.n_segments
        if total is not None and start_segment + n_segments > total:
            raise ValidationError(
                f"trajectory covers {total} segments ({total * self.spacing:g} time units), "
                f"requested up to segment {start_segment + n_segments}"
            )

    def segments_for(self, t: float) -> int:
        """Number of whole segments in a duration t; t must be a multiple of spacing."""
        if t < 0:
            raise ValidationError(f"duration must be non-negative, got {t}")
        n = int(round(t / self.spacing))
        if abs(n * self.spacing - t) > 1e-9 * max(1.0, t):
            raise ValidationError(f"duration {t} is not a multiple of the trajectory spacing {self.spacing}")
        return n

    def velocity(self, points, segment: int, theta: float, gradient: bool = False):
        """
        u (and ∇u) at time start_time + (segment + theta)·spacing.

        Returns:
            (P, 2) velocities and (P, 2, 2) gradients (None unless requested)
        """
        pts, _ = _as_points(points)
        u0, g0 = self.evaluator(segment).evaluate(pts, gradient)
        if theta == 0.0:
            return u0, g0
        u1, g1 = self.evaluator(segment + 1).evaluate(pts, gradient)
        u = (1.0 - theta) * u0 + theta * u1
        g = (1.0 - theta) * g0 + theta * g1 if gradient else None
        return u, g

    def shifted(self, segments: int) -> "VelocityTrajectory":
        raise ValidationError(f"{type(self).__name__} does not support shifting")

    def describe(self) -> dict:
        return {
            "kind": type(self).__name__,
            "spacing": self.spacing,
            "cutoff": self.cutoff,
            "eval_mode": self.eval_mode,
            "interp_grid": self.interp_grid,
            "n_segments": self.n_segments,
        }


class StoredTrajectory(VelocityTrajectory):
    """Stored states with random access; `offset` implements the time shift."""

    def __init__(self, fields: Sequence[SpectralVelocity], spacing: float, eval_mode: str = "auto",
                 interp_grid: int = DEFAULT_INTERP_GRID, start_time: float = 0.0, offset: int = 0,
                 _shared_cache=None):
        if len(fields) < 1:
            raise ValidationError("a trajectory needs at least one state")
        cutoffs = {f.cutoff for f in fields}
        if len(cutoffs) != 1:
            raise ValidationError(f"all states must share one cutoff, got {sorted(cutoffs)}")
        super().__init__(spacing, fields[0].cutoff, eval_mode, interp_grid, start_time)
        self._fields = list(fields)
        self.offset = int(offset)
        if _shared_cache is not None:
            self._cache, self._lock = _shared_cache

    @classmethod
    def from_states(cls, states: Sequence, eval_mode: str = "auto",
                    interp_grid: int = DEFAULT_INTERP_GRID) -> "StoredTrajectory":
        """Build from FlowStates; the stored times must be uniformly spaced."""
        if len(states) < 2:
            raise ValidationError("a stored trajectory needs at least two states")
        times = np.array([s.time for s in states])
        gaps = np.diff(times)
        spacing = float(gaps[0])
        if spacing <= 0 or np.max(np.abs(gaps - spacing)) > 1e-9 * max(1.0, spacing):
            raise ValidationError("stored states must be uniformly spaced in time")
        return cls([s.field for s in states], spacing, eval_mode, interp_grid, start_time=float(times[0]))

    @property
    def n_segments(self) -> int:
        return len(self._fields) - 1 - self.offset

    def field(self, index: int) -> SpectralVelocity:
        i = index + self.offset
        if index < 0 or i >= len(self._fields):
            raise ValidationError(f"state index {index} outside the stored trajectory")
        return self._fields[i]

    def _cache_key(self, index: int) -> int:
        return index + self.offset

    def shifted(self, segments: int) -> "StoredTrajectory":
        """The same velocity path seen from `segments` steps later (θ_t on the noise)."""
        if segments < 0 or segments > self.n_segments:
            raise ValidationError(f"cannot shift by {segments} segments")
        return StoredTrajectory(
            self._fields, self.spacing, self.eval_mode, self.interp_grid,
            start_time=self.start_time + segments * self.spacing, offset=self.offset + segments,
            _shared_cache=(self._cache, self._lock),
        )


class FrozenTrajectory(VelocityTrajectory):
    """A single field constant in time."""

    def __init__(self, f: SpectralVelocity, spacing: float = 0.1, n_segments: Optional[int] = None,
                 eval_mode: str = "auto", interp_grid: int = DEFAULT_INTERP_GRID):
        super().__init__(spacing, f.cutoff, eval_mode, interp_grid)
        self._field = f
        self._n = n_segments

    @property
    def n_segments(self) -> Optional[int]:
        return self._n

    def field(self, index: int) -> SpectralVelocity:
        return self._field

    def _cache_key(self, index: int) -> int:
        return 0

    def velocity(self, points, segment: int, theta: float, gradient: bool = False):
        pts, _ = _as_points(points)
        return self.evaluator(0).evaluate(pts, gradient)

    def shifted(self, segments: int) -> "FrozenTrajectory":
        n = None if self._n is None else self._n - segments
        return FrozenTrajectory(self._field, self.spacing, n, self.eval_mode, self.interp_grid)


class StreamedTrajectory(VelocityTrajectory):
    """
    Forward-only trajectory over an iterator of FlowStates (every `stride`-th
    state is used). Only a short window of recent states is kept, so
    segments must be requested in non-decreasing order.
    """

    def __init__(self, states: Iterator, spacing: float, cutoff: int, n_segments: Optional[int] = None,
                 stride: int = 1, eval_mode: str = "auto", interp_grid: int = DEFAULT_INTERP_GRID,
                 window: int = 4):
        super().__init__(spacing, cutoff, eval_mode, interp_grid)
        if stride < 1:
            raise ValidationError(f"stride must be a positive integer, got {stride}")
        self._states = states
        self._stride = int(stride)
        self._n = n_segments
        self._window: deque = deque(maxlen=window)
        self._next_index = 0

    @property
    def n_segments(self) -> Optional[int]:
        return self._n

    def field(self, index: int) -> SpectralVelocity:
        while self._next_index <= index:
            first = self._next_index == 0
            f = next(self._states).field if first else self._advance()
            self._window.append((self._next_index, f))
            self._next_index += 1
        for i, f in self._window:
            if i == index:
                return f
        raise ValidationError(f"streamed trajectory already discarded state {index}")

    def _advance(self) -> SpectralVelocity:
        state = None
        for _ in range(self._stride):
            state = next(self._states)
        return state.field
