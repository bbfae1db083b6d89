# backend/spectral/field.py - Divergence-free velocity fields on the 2-torus
"""
Spectral velocity fields on T² = [0, 2π)².

Basis: e_k(x) = (k⊥/|k|) sin(k·x) for k in Z²₊ and (k⊥/|k|) cos(k·x) for
k in Z²₋, with k⊥ = (k2, -k1). Z²₊ holds k2 > 0, plus k1 > 0 on the k2 = 0 axis.

Coefficients are stored on a (2N+1) x (2N+1) array indexed by
(k1 + N, k2 + N). The centre entry (k = 0) is always zero.

Normalization: the basis is orthogonal but not L²-normalized,
‖e_k‖²_L² = 2π². Energy bookkeeping stays in coefficient space: the torus
average of |u|² equals ½ Σ a_k², and ‖u‖²_L² = 2π² Σ a_k².

Sobolev convention: ‖u‖²_{H^s} = Σ (1 + |k|²)^s a_k².

Internally every field is also carried in scalar complex form
u(x) = Σ_k (k⊥/|k|) c_k e^{ik·x}, with c_k = -(a_{-k} + i a_k)/2 for k in Z²₊
and c_{-k} = -conj(c_k).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from backend.errors import AliasingError, InvalidIndexError, ValidationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
BASIS_L2_NORM_SQ = 2.0 * np.pi**2
CONJUGATE_TOLERANCE = 1e-10


# ----------------------------
# Torus geometry
# ----------------------------

def wrap(x):
    """Reduce coordinates modulo 2π."""
    return np.mod(x, TWO_PI)


def torus_displacement(a, b):
    """Displacement b - a with every coordinate in (-π, π]."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return np.pi - np.mod(np.pi - d, TWO_PI)


def torus_distance(a, b):
    """Geodesic distance on the flat torus (last axis holds coordinates)."""
    return np.linalg.norm(torus_displacement(a, b), axis=-1)


@dataclass(frozen=True)
class WaveIndex:
    """Wavenumber k = (k1, k2) in Z² minus the origin."""

    k1: int
    k2: int

    def __post_init__(self):
        if int(self.k1) == 0 and int(self.k2) == 0:
            raise InvalidIndexError("wavenumber (0, 0) is not a basis index")
        object.__setattr__(self, "k1", int(self.k1))
        object.__setattr__(self, "k2", int(self.k2))

    @property
    def is_positive(self) -> bool:
        return self.k2 > 0 or (self.k1 > 0 and self.k2 == 0)

    @property
    def perp(self) -> Tuple[int, int]:
        return (self.k2, -self.k1)

    @property
    def norm(self) -> float:
        return float(np.hypot(self.k1, self.k2))

    @property
    def sup_norm(self) -> int:
        return max(abs(self.k1), abs(self.k2))

    def __neg__(self) -> "WaveIndex":
        return WaveIndex(-self.k1, -self.k2)


@dataclass(frozen=True)
class PhysicalPoint:
    """A point of the torus, coordinates reduced modulo 2π."""

    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(wrap(float(self.x1))))
        object.__setattr__(self, "x2", float(wrap(float(self.x2))))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


def _as_index(k) -> WaveIndex:
    if isinstance(k, WaveIndex):
        return k
    k1, k2 = k
    return WaveIndex(int(k1), int(k2))


def _as_points(x) -> Tuple[np.ndarray, bool]:
    """Return an (P, 2) array and whether the input was a single point."""
    if isinstance(x, PhysicalPoint):
        return x.as_array()[None, :], True
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (2,):
            raise ValidationError(f"a point needs 2 coordinates, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"points must have shape (P, 2), got {arr.shape}")
    return arr, False


# ----------------------------
# Mode bookkeeping
# ----------------------------

@dataclass(frozen=True, eq=False)
class ModeGeometry:
    """Per-cutoff wavenumber arrays, shared read-only across fields."""

    cutoff: int
    k1: np.ndarray
    k2: np.ndarray
    ksq: np.ndarray
    positive: np.ndarray
    perp_unit: np.ndarray  # (2, n, n), zero at k = 0

    @property
    def size(self) -> int:
        return 2 * self.cutoff + 1


@lru_cache(maxsize=None)
def mode_geometry(N: int) -> ModeGeometry:
    if N < 1:
        raise ValidationError(f"cutoff must be a positive integer, got {N}")
    ks = np.arange(-N, N + 1)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    ksq = (K1**2 + K2**2).astype(float)
    kabs = np.sqrt(ksq)
    kabs[N, N] = 1.0
    perp = np.stack([K2 / kabs, -K1 / kabs])
    positive = (K2 > 0) | ((K1 > 0) & (K2 == 0))
    for arr in (K1, K2, ksq, perp, positive):
        arr.setflags(write=False)
    return ModeGeometry(N, K1, K2, ksq, positive, perp)


def real_to_scalar(a: np.ndarray, N: int) -> np.ndarray:
    """Real basis coefficients -> scalar complex coefficients c_k."""
    geo = mode_geometry(N)
    a_neg = a[::-1, ::-1]
    c = np.where(geo.positive, -(a_neg + 1j * a) / 2.0, (a - 1j * a_neg) / 2.0)
    c[N, N] = 0.0
    return c


def scalar_to_real(c: np.ndarray, N: int) -> np.ndarray:
    """Inverse of real_to_scalar (assumes c_{-k} = -conj(c_k))."""
    geo = mode_geometry(N)
    a = np.where(geo.positive, -2.0 * c.imag, -2.0 * c[::-1, ::-1].real)
    a[N, N] = 0.0
    return a


def grid_indices(N: int, M: int) -> np.ndarray:
    """FFT row/column index of each wavenumber -N..N on an M-point grid."""
    return np.arange(-N, N + 1) % M


# ----------------------------
# Field types
# ----------------------------

@dataclass(frozen=True, eq=False)
class SpectralVelocity:
    """Truncated field Σ a_k e_k over max(|k1|, |k2|) <= cutoff."""

    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        N = int(self.cutoff)
        if N < 1:
            raise ValidationError(f"cutoff must be a positive integer, got {self.cutoff}")
        a = np.array(self.coeffs, dtype=float)
        if a.shape != (2 * N + 1, 2 * N + 1):
            raise ValidationError(
                f"coefficient array for N={N} must be {(2 * N + 1, 2 * N + 1)}, got {a.shape}"
            )
        if a[N, N] != 0.0:
            raise InvalidIndexError("the k = (0, 0) coefficient must be zero (mean-zero field)")
        a.setflags(write=False)
        object.__setattr__(self, "cutoff", N)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def zeros(cls, N: int) -> "SpectralVelocity":
        return cls(N, np.zeros((2 * N + 1, 2 * N + 1)))

    @classmethod
    def from_modes(cls, N: int, modes: Mapping) -> "SpectralVelocity":
        """Build from {WaveIndex or (k1, k2): a_k}; unspecified modes are zero."""
        a = np.zeros((2 * N + 1, 2 * N + 1))
        for key, value in modes.items():
            k = _as_index(key)
            if k.sup_norm > N:
                raise InvalidIndexError(f"mode {(k.k1, k.k2)} exceeds cutoff N={N}")
            a[k.k1 + N, k.k2 + N] = float(value)
        return cls(N, a)

    def amplitude(self, k) -> float:
        k = _as_index(k)
        if k.sup_norm > self.cutoff:
            raise InvalidIndexError(f"mode {(k.k1, k.k2)} exceeds cutoff N={self.cutoff}")
        return float(self.coeffs[k.k1 + self.cutoff, k.k2 + self.cutoff])

    def items(self) -> Iterator[Tuple[WaveIndex, float]]:
        """All retained modes in (k1, k2) order."""
        N = self.cutoff
        for i in range(2 * N + 1):
            for j in range(2 * N + 1):
                if i == N and j == N:
                    continue
                yield WaveIndex(i - N, j - N), float(self.coeffs[i, j])

    @cached_property
    def scalar_coeffs(self) -> np.ndarray:
        return real_to_scalar(self.coeffs, self.cutoff)

    @cached_property
    def vector_coeffs(self) -> np.ndarray:
        """Complex vector coefficients û_k, shape (2, 2N+1, 2N+1)."""
        return mode_geometry(self.cutoff).perp_unit * self.scalar_coeffs

    @property
    def energy(self) -> float:
        return 0.5 * float(np.sum(self.coeffs**2))

    @property
    def enstrophy(self) -> float:
        return 0.5 * float(np.sum(mode_geometry(self.cutoff).ksq * self.coeffs**2))

    def _check_compatible(self, other: "SpectralVelocity"):
        if other.cutoff != self.cutoff:
            raise ValidationError(f"cutoff mismatch: {self.cutoff} vs {other.cutoff}")

    def __add__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        self._check_compatible(other)
        return SpectralVelocity(self.cutoff, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        self._check_compatible(other)
        return SpectralVelocity(self.cutoff, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralVelocity":
        return SpectralVelocity(self.cutoff, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralVelocity":
        return SpectralVelocity(self.cutoff, -self.coeffs)


@dataclass(frozen=True, eq=False)
class ComplexVelocity:
    """Vector coefficients û_k on the complex-exponential basis."""

    cutoff: int
    coeffs: np.ndarray  # (2, 2N+1, 2N+1) complex

    def as_dict(self) -> Dict[WaveIndex, np.ndarray]:
        N = self.cutoff
        out = {}
        for i in range(2 * N + 1):
            for j in range(2 * N + 1):
                if i == N and j == N:
                    continue
                out[WaveIndex(i - N, j - N)] = self.coeffs[:, i, j].copy()
        return out

    def coefficient(self, k) -> np.ndarray:
        k = _as_index(k)
        return self.coeffs[:, k.k1 + self.cutoff, k.k2 + self.cutoff].copy()


# ----------------------------
# Operations
# ----------------------------

def basis_eval(k, x) -> np.ndarray:
    """
    Evaluate the basis vector field e_k.

    Args:
        k: WaveIndex or (k1, k2); (0, 0) raises InvalidIndexError
        x: PhysicalPoint, a 2-vector, or an (P, 2) array of points

    Returns:
        (2,) vector for a single point, else (P, 2)
    """
    k = _as_index(k)
    pts, single = _as_points(x)
    phase = k.k1 * pts[:, 0] + k.k2 * pts[:, 1]
    profile = np.sin(phase) if k.is_positive else np.cos(phase)
    direction = np.array(k.perp, dtype=float) / k.norm
    out = profile[:, None] * direction[None, :]
    return out[0] if single else out


def _phase_factors(pts: np.ndarray, N: int) -> Tuple[np.ndarray, np.ndarray]:
    ks = np.arange(-N, N + 1)
    e1 = np.exp(1j * pts[:, 0:1] * ks[None, :])
    e2 = np.exp(1j * pts[:, 1:2] * ks[None, :])
    return e1, e2


def evaluate_coefficients(stack: np.ndarray, pts: np.ndarray, N: int) -> np.ndarray:
    """
    Exact trigonometric sum of complex coefficient arrays at points.

    `stack` has shape (..., 2N+1, 2N+1); the result has shape (..., P).
    The double sum factorizes into two small matrix products per point.
    """
    e1, e2 = _phase_factors(pts, N)
    partial = np.einsum("pa,...ab->...pb", e1, stack)
    return np.einsum("...pb,pb->...p", partial, e2).real


def eval_velocity(f: SpectralVelocity, x) -> np.ndarray:
    """Exact truncated sum Σ a_k e_k(x); (2,) for one point, else (P, 2)."""
    pts, single = _as_points(x)
    u = evaluate_coefficients(f.vector_coeffs, pts, f.cutoff).T
    return u[0] if single else u


def gradient_coefficients(f: SpectralVelocity) -> np.ndarray:
    """Coefficients of ∂_j u_i, shape (2, 2, 2N+1, 2N+1)."""
    geo = mode_geometry(f.cutoff)
    U = f.vector_coeffs
    K = np.stack([geo.k1, geo.k2]).astype(float)
    return 1j * U[:, None, :, :] * K[None, :, :, :]


def eval_gradient(f: SpectralVelocity, x) -> np.ndarray:
    """Velocity gradient, entry (i, j) = ∂_j u_i; (2, 2) or (P, 2, 2)."""
    pts, single = _as_points(x)
    g = evaluate_coefficients(gradient_coefficients(f), pts, f.cutoff)
    g = np.moveaxis(g, -1, 0)
    return g[0] if single else g


def sobolev_norm(f: SpectralVelocity, s: float) -> float:
    """sqrt(Σ (1 + |k|²)^s a_k²)."""
    if s < 0:
        raise ValidationError(f"Sobolev index must be non-negative, got {s}")
    weights = (1.0 + mode_geometry(f.cutoff).ksq) ** s
    return float(np.sqrt(np.sum(weights * f.coeffs**2)))


def to_complex(f: SpectralVelocity) -> ComplexVelocity:
    return ComplexVelocity(f.cutoff, f.vector_coeffs.copy())


def from_complex(cv: ComplexVelocity, tol: float = CONJUGATE_TOLERANCE) -> SpectralVelocity:
    """
    Convert vector coefficients back to the real basis.

    Rejects maps that are not conjugate-symmetric (û_{-k} = conj û_k) or
    whose coefficients are not orthogonal to k, relative tolerance `tol`.
    """
    N = int(cv.cutoff)
    geo = mode_geometry(N)
    U = np.asarray(cv.coeffs, dtype=complex)
    if U.shape != (2, 2 * N + 1, 2 * N + 1):
        raise ValidationError(f"complex coefficients for N={N} must have shape (2, {2 * N + 1}, {2 * N + 1})")
    scale = max(1.0, float(np.max(np.abs(U))))
    if np.max(np.abs(U[:, ::-1, ::-1] - np.conj(U))) > tol * scale:
        raise ValidationError("complex coefficients violate conjugate symmetry û_(-k) = conj(û_k)")
    if np.max(np.abs(U[:, N, N])) > tol * scale:
        raise ValidationError("complex coefficients carry a nonzero mean (k = 0) mode")
    kabs = np.sqrt(geo.ksq)
    kabs[N, N] = 1.0
    longitudinal = (geo.k1 * U[0] + geo.k2 * U[1]) / kabs
    if np.max(np.abs(longitudinal)) > tol * scale:
        raise ValidationError("complex coefficients are not orthogonal to k (field is not divergence-free)")
    c = geo.perp_unit[0] * U[0] + geo.perp_unit[1] * U[1]
    return SpectralVelocity(N, scalar_to_real(c, N))


def _check_grid(N: int, M: int):
    if M < 2 * N + 2:
        raise AliasingError(
            f"grid size M={M} aliases cutoff N={N}: need M >= 2N + 2 = {2 * N + 2}"
        )


def place_on_grid(stack: np.ndarray, N: int, M: int) -> np.ndarray:
    """Values on the uniform M x M grid of complex coefficient arrays (..., n, n)."""
    idx = grid_indices(N, M)
    full = np.zeros(stack.shape[:-2] + (M, M), dtype=complex)
    full[..., idx[:, None], idx[None, :]] = stack
    return np.fft.ifft2(full, axes=(-2, -1)).real * (M * M)


def grid_sample(f: SpectralVelocity, M: int) -> np.ndarray:
    """
    Velocity on the grid x = (2π i/M, 2π j/M).

    Returns:
        array (2, M, M) with values[c, i, j] = u_c(x1_i, x2_j)
    """
    _check_grid(f.cutoff, M)
    return place_on_grid(f.vector_coeffs, f.cutoff, M)


def grid_sample_gradient(f: SpectralVelocity, M: int) -> np.ndarray:
    """Gradient on the grid, shape (2, 2, M, M), entry [i, j] = ∂_j u_i."""
    _check_grid(f.cutoff, M)
    return place_on_grid(gradient_coefficients(f), f.cutoff, M)


def project_grid(values: np.ndarray, N: int) -> np.ndarray:
    """
    Leray-projected scalar coefficients c_k of grid vector data.

    Projecting û onto k⊥/|k| is exactly (I - k kᵀ/|k|²) in two dimensions.
    """
    M = values.shape[-1]
    _check_grid(N, M)
    idx = grid_indices(N, M)
    spectrum = np.fft.fft2(values, axes=(-2, -1)) / (M * M)
    U = spectrum[:, idx[:, None], idx[None, :]]
    geo = mode_geometry(N)
    c = geo.perp_unit[0] * U[0] + geo.perp_unit[1] * U[1]
    c[N, N] = 0.0
    return c


def grid_fit(values: np.ndarray, N: int) -> SpectralVelocity:
    """Inverse of grid_sample on fields with cutoff N (requires M >= 2N + 2)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[0] != 2 or values.shape[1] != values.shape[2]:
        raise ValidationError(f"grid values must have shape (2, M, M), got {values.shape}")
    return SpectralVelocity(N, scalar_to_real(project_grid(values, N), N))


# ----------------------------
# Text format
# ----------------------------

def dumps_spectral(f: SpectralVelocity) -> str:
    """Header 'N=<cutoff>' then one 'k1 k2 a_k' line per mode, 17 significant digits."""
    lines = [f"N={f.cutoff}"]
    for k, a in f.items():
        lines.append(f"{k.k1} {k.k2} {a:.17g}")
    return "\n".join(lines) + "\n"


def loads_spectral(text: str) -> SpectralVelocity:
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows or not rows[0].startswith("N="):
        raise ValidationError("spectral text must start with a 'N=<cutoff>' header")
    try:
        N = int(rows[0][2:])
    except ValueError:
        raise ValidationError(f"bad cutoff header: {rows[0]!r}")
    modes = {}
    for row in rows[1:]:
        parts = row.split()
        if len(parts) != 3:
            raise ValidationError(f"bad spectral line: {row!r}")
        modes[(int(parts[0]), int(parts[1]))] = float(parts[2])
    return SpectralVelocity.from_modes(N, modes)


