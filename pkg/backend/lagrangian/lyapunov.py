# backend/lagrangian/lyapunov.py - Lyapunov spectrum, Pesin entropy and finite-time directions
"""
Benettin-style QR estimation of the two Lyapunov exponents of the tracer
Jacobian cocycle, with batch-means confidence intervals, plus finite-time
stable/unstable directions from windowed cocycle products.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from backend.errors import DegenerateFrameError, SumRuleError, ValidationError
from backend.lagrangian.trajectory import VelocityTrajectory
from backend.lagrangian.tracer import integrate_orbits
from backend.spectral.field import _as_points

logger = logging.getLogger(__name__)

DEGENERACY_TOLERANCE = 1e-12
HISTORY_COLUMNS = ["time", "lambda1", "lambda2", "sum"]


@dataclass
class LyapunovAccumulator:
    """Running QR state: orthonormal frame, log-sums and per-renormalization increments."""

    renorm: int = 1
    frame: np.ndarray = field(default_factory=lambda: np.eye(2))
    log_sums: np.ndarray = field(default_factory=lambda: np.zeros(2))
    steps: int = 0
    time: float = 0.0
    increments: List[np.ndarray] = field(default_factory=list)
    durations: List[float] = field(default_factory=list)

    @property
    def estimates(self) -> np.ndarray:
        if self.time <= 0:
            return np.zeros(2)
        return self.log_sums / self.time


def accumulate_qr(acc: LyapunovAccumulator, step_matrix: np.ndarray, duration: float = 1.0) -> LyapunovAccumulator:
    """
    Propagate the frame by `step_matrix`, re-orthonormalize, and add log|R_ii|.

    The QR signs are fixed so that R has a positive diagonal.
    """
    propagated = np.asarray(step_matrix, dtype=float) @ acc.frame
    if not np.all(np.isfinite(propagated)):
        raise DegenerateFrameError(f"non-finite tangent frame at step {acc.steps}", step=acc.steps)
    Q, R = np.linalg.qr(propagated)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q = Q * signs
    diag = np.abs(np.diag(R))
    scale = max(float(np.linalg.norm(propagated)), 1.0)
    if np.any(diag <= DEGENERACY_TOLERANCE * scale):
        raise DegenerateFrameError(f"rank-deficient tangent frame at step {acc.steps}", step=acc.steps)
    logs = np.log(diag)
    acc.frame = Q
    acc.log_sums = acc.log_sums + logs
    acc.steps += 1
    acc.time += duration
    acc.increments.append(logs)
    acc.durations.append(duration)
    return acc


@dataclass
class Spectrum:
    lambda1: float
    lambda2: float
    ci1: float
    ci2: float
    T: float
    n_renorm: int = 0
    batches: int = 0
    history: Optional[pd.DataFrame] = field(default=None, repr=False)

    @property
    def sum(self) -> float:
        return self.lambda1 + self.lambda2

    def excludes_zero_from_below(self) -> bool:
        """True if the λ₁ confidence interval lies strictly above zero."""
        return np.isfinite(self.ci1) and self.lambda1 - self.ci1 > 0

    def summary(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "ci1": self.ci1,
            "lambda2": self.lambda2,
            "ci2": self.ci2,
            "pesin_entropy": pesin_entropy(self),
            "T": self.T,
        }


def batch_confidence(acc: LyapunovAccumulator, batches: int, level: float = 0.95) -> Tuple[float, float]:
    """Batch-means half-widths for both exponents (Student t, batches - 1 dof)."""
    n = len(acc.increments)
    if batches < 2 or n < batches:
        logger.warning(f"Only {n} renormalizations for {batches} batches; confidence intervals unavailable")
        return float("nan"), float("nan")
    increments = np.array(acc.increments)
    durations = np.array(acc.durations)
    groups = np.array_split(np.arange(n), batches)
    means = np.array([increments[g].sum(axis=0) / durations[g].sum() for g in groups])
    quantile = stats.t.ppf(0.5 + level / 2.0, batches - 1)
    half = quantile * means.std(axis=0, ddof=1) / np.sqrt(batches)
    return float(half[0]), float(half[1])


def estimate_from_matrices(matrices: Sequence[np.ndarray], duration: float = 1.0, batches: int = 20,
                           frame0: Optional[np.ndarray] = None) -> Spectrum:
    """Spectrum of a given cocycle, one matrix per renormalization."""
    acc = LyapunovAccumulator()
    if frame0 is not None:
        acc.frame = np.linalg.qr(np.asarray(frame0, dtype=float))[0]
    for M in matrices:
        accumulate_qr(acc, M, duration)
    lam = acc.estimates
    ci1, ci2 = batch_confidence(acc, batches)
    return Spectrum(float(lam[0]), float(lam[1]), ci1, ci2, acc.time, acc.steps, batches)


def estimate_spectrum(
    trajectory: VelocityTrajectory,
    x0,
    T: float,
    renorm: int = 10,
    batches: int = 20,
    substeps: int = 1,
    sum_tolerance: float = 1e-3,
    on_renorm: Optional[Callable[[float, float, float], None]] = None,
    frame0: Optional[np.ndarray] = None,
) -> Spectrum:
    """
    Lyapunov exponents of the tracer cocycle started at x0.

    Args:
        trajectory: velocity path covering [0, T]
        x0: initial tracer position
        T: total time, a multiple of renorm·spacing
        renorm: trajectory segments between QR renormalizations
        batches: number of batches for the confidence intervals
        substeps: RK4 substeps per segment
        sum_tolerance: bound on |λ₁ + λ₂| (incompressibility)
        on_renorm: called with (time, λ₁, λ₂) after every renormalization
        frame0: initial tangent frame, identity by default

    Returns:
        Spectrum with batch-means half-widths and the running history
    """
    if renorm < 1:
        raise ValidationError(f"renorm must be a positive integer, got {renorm}")
    n_seg = trajectory.segments_for(T)
    n_renorm = n_seg // renorm
    if n_renorm < 1:
        raise ValidationError(f"T={T} is shorter than one renormalization interval ({renorm} segments)")
    if n_renorm * renorm != n_seg:
        logger.warning(f"T={T} is not a multiple of the renormalization interval; using {n_renorm * renorm} segments")

    acc = LyapunovAccumulator(renorm=renorm)
    if frame0 is not None:
        acc.frame = np.linalg.qr(np.asarray(frame0, dtype=float))[0]
    x, _ = _as_points(x0)
    duration = renorm * trajectory.spacing
    rows = []
    logger.info(f"Estimating Lyapunov spectrum over T={n_renorm * duration:g} ({n_renorm} renormalizations)")
    for i in range(n_renorm):
        batch = integrate_orbits(trajectory, x, renorm, substeps, start_segment=i * renorm)
        x = batch.positions
        accumulate_qr(acc, batch.jacobians[0], duration)
        lam1, lam2 = acc.estimates
        rows.append({"time": acc.time, "lambda1": lam1, "lambda2": lam2, "sum": lam1 + lam2})
        if on_renorm is not None:
            on_renorm(acc.time, lam1, lam2)

    lam = acc.estimates
    ci1, ci2 = batch_confidence(acc, batches)
    spectrum = Spectrum(
        float(lam[0]), float(lam[1]), ci1, ci2, acc.time, acc.steps, batches,
        history=pd.DataFrame(rows, columns=HISTORY_COLUMNS),
    )
    if abs(spectrum.sum) >= sum_tolerance:
        raise SumRuleError(
            f"lambda1 + lambda2 = {spectrum.sum:.3g} exceeds {sum_tolerance:g}; the tangent flow lost unimodularity"
        )
    logger.info(f"✓ lambda1 = {spectrum.lambda1:.4g} ± {ci1:.2g}, lambda2 = {spectrum.lambda2:.4g} ± {ci2:.2g}")
    return spectrum


def pesin_entropy(sp: Spectrum) -> float:
    """Sum of positive exponents (simple exponents in 2D)."""
    return max(sp.lambda1, 0.0) + max(sp.lambda2, 0.0)


# ----------------------------
# Finite-time directions
# ----------------------------

@dataclass(frozen=True, eq=False)
class DirectionFrame:
    index: int
    time: float
    eu: np.ndarray
    es: np.ndarray
    angle: float
    converged: bool
    growth: float  # log-growth per step of eu over the following window


def tangent_step_matrices(trajectory: VelocityTrajectory, x0, n_steps: int, step_segments: int = 1,
                          substeps: int = 1, start_segment: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Per-step Jacobians along one orbit; returns (matrices (n, 2, 2), positions (n + 1, 2))."""
    x, _ = _as_points(x0)
    matrices = np.empty((n_steps, 2, 2))
    positions = np.empty((n_steps + 1, 2))
    positions[0] = x[0]
    for i in range(n_steps):
        batch = integrate_orbits(trajectory, x, step_segments, substeps, start_segment=start_segment + i * step_segments)
        x = batch.positions
        matrices[i] = batch.jacobians[0]
        positions[i + 1] = x[0]
    return matrices, positions


def _window_product(matrices: np.ndarray, start: int, stop: int) -> Tuple[np.ndarray, float]:
    """Normalized M[stop-1]···M[start] and the log of the discarded scale."""
    prod = np.eye(2)
    log_scale = 0.0
    for i in range(start, stop):
        prod = matrices[i] @ prod
        norm = np.linalg.norm(prod)
        prod = prod / norm
        log_scale += np.log(norm)
    return prod, log_scale


def _adjugate(A: np.ndarray) -> np.ndarray:
    return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])


def _leading_direction(S: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, bool]:
    """Power iteration on a symmetric positive semi-definite 2x2 matrix."""
    columns = np.linalg.norm(S, axis=0)
    v = S[:, int(np.argmax(columns))].copy()
    norm = np.linalg.norm(v)
    if norm == 0:
        return np.array([1.0, 0.0]), False
    v /= norm
    for _ in range(max_iter):
        w = S @ v
        w /= np.linalg.norm(w)
        step_angle = abs(float(w[0] * v[1] - w[1] * v[0]))  # sine of the step angle
        v = w
        if step_angle < tol:
            return v, True
    return v, False


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    i = 0 if abs(v[0]) > 1e-12 else 1
    return v if v[i] > 0 else -v


def finite_time_directions(matrices: np.ndarray, window: int, stride: int = 1, tol: float = 1e-8,
                           max_iter: int = 100, gap_tol: float = 1e-3,
                           step_duration: float = 1.0, start_time: float = 0.0) -> List[DirectionFrame]:
    """
    Finite-time unstable/stable directions of a 2x2 cocycle.

    For each output index t (window <= t <= n - window):
      eu(t) - leading eigenvector of A·Aᵀ, A = M[t-1]···M[t-window];
      es(t) - leading eigenvector of B⁻¹·B⁻ᵀ, B = M[t+window-1]···M[t].
    A window whose products show no splitting (σ₂/σ₁ close to 1) or whose
    power iteration does not settle is flagged with converged = False.
    Frame times are start_time + t·step_duration.
    """
    matrices = np.asarray(matrices, dtype=float)
    n = len(matrices)
    if window < 1 or stride < 1:
        raise ValidationError("window and stride must be positive integers")
    if n < 2 * window:
        raise ValidationError(f"{n} cocycle steps are too few for forward and backward windows of {window}")

    frames = []
    flagged = 0
    for t in range(window, n - window + 1, stride):
        A, _ = _window_product(matrices, t - window, t)
        B, log_scale = _window_product(matrices, t, t + window)
        S_u = A @ A.T
        Binv = _adjugate(B)
        S_s = Binv @ Binv.T
        eu, ok_u = _leading_direction(S_u, tol, max_iter)
        es, ok_s = _leading_direction(S_s, tol, max_iter)
        split_u = np.linalg.det(S_u) / np.trace(S_u) ** 2 * 4.0 < 1.0 - gap_tol
        split_s = np.linalg.det(S_s) / np.trace(S_s) ** 2 * 4.0 < 1.0 - gap_tol
        converged = bool(ok_u and ok_s and split_u and split_s)
        flagged += not converged
        eu, es = _sign_normalize(eu), _sign_normalize(es)
        angle = float(np.arccos(np.clip(eu @ es, -1.0, 1.0)))
        growth = (log_scale + np.log(np.linalg.norm(B @ eu))) / (window * step_duration)
        frames.append(DirectionFrame(t, start_time + t * step_duration, eu, es, angle, converged, float(growth)))
    if flagged:
        logger.warning(f"{flagged} of {len(frames)} direction windows did not converge (window={window})")
    return frames


def estimate_directions(trajectory: VelocityTrajectory, x0, window: int, T: Optional[float] = None,
                        stride: int = 1, step_segments: int = 1, substeps: int = 1) -> List[DirectionFrame]:
    """Finite-time directions along the orbit of x0; window counts steps of step_segments segments."""
    if T is None:
        if trajectory.n_segments is None:
            raise ValidationError("an unbounded trajectory needs an explicit T")
        n_steps = trajectory.n_segments // step_segments
    else:
        n_steps = trajectory.segments_for(T) // step_segments
    matrices, _ = tangent_step_matrices(trajectory, x0, n_steps, step_segments, substeps)
    return finite_time_directions(matrices, window, stride, step_duration=step_segments * trajectory.spacing,
                                  start_time=trajectory.start_time)


def directions_table(frames: Sequence[DirectionFrame]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "time": f.time,
            "eu1": f.eu[0], "eu2": f.eu[1],
            "es1": f.es[0], "es2": f.es[1],
            "angle": f.angle,
            "growth": f.growth,
            "converged": f.converged,
        }
        for f in frames
    ])
