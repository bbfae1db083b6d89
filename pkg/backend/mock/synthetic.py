# synthetic.py - Closed-form velocity paths and cocycles used as oracles and controls
import numpy as np

from backend.spectral.field import SpectralVelocity
from backend.lagrangian.trajectory import FrozenTrajectory


def shear_field(amplitude, N=1):
    """a·e_(1,0) = (0, -a sin x1)."""
    return SpectralVelocity.from_modes(N, {(1, 0): amplitude})


def cellular_field(amplitude, N=1):
    """a·(e_(0,1) + e_(1,0)) = a·(sin x2, -sin x1), steady cells with saddle points."""
    return SpectralVelocity.from_modes(N, {(0, 1): amplitude, (1, 0): amplitude})


def frozen_shear(amplitude, spacing=0.1, n_segments=None, N=1, eval_mode="auto"):
    """Shear held constant in time: x1 fixed, x2(t) = x2 - a·t·sin x1."""
    return FrozenTrajectory(shear_field(amplitude, N), spacing, n_segments, eval_mode)


def zero_trajectory(spacing=0.1, n_segments=None, N=1):
    """Identity flow control."""
    return FrozenTrajectory(SpectralVelocity.zeros(N), spacing, n_segments)


def shear_flow_exact(x, t, amplitude):
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 1] = x[..., 1] - amplitude * t * np.sin(x[..., 0])
    return np.mod(out, 2 * np.pi)


def shear_jacobian_exact(x, t, amplitude):
    x = np.asarray(x, dtype=float)
    return np.array([[1.0, 0.0], [-amplitude * t * np.cos(x[0]), 1.0]])


def constant_cocycle(matrix, n):
    return np.broadcast_to(np.asarray(matrix, dtype=float), (n, 2, 2)).copy()


def rotation_cocycle(theta, n):
    c, s = np.cos(theta), np.sin(theta)
    return constant_cocycle([[c, -s], [s, c]], n)


def random_diagonal_cocycle(log_means, n, spread=0.5, seed=0):
    """diag(e^{g1}, e^{g2}) with g_i ~ Normal(log_means[i], spread²); exponents are the log_means."""
    rng = np.random.default_rng(seed)
    g = rng.normal(np.asarray(log_means, dtype=float), spread, size=(n, 2))
    out = np.zeros((n, 2, 2))
    out[:, 0, 0] = np.exp(g[:, 0])
    out[:, 1, 1] = np.exp(g[:, 1])
    return out
