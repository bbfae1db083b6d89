# backend/spectral/integrator.py - Galerkin-truncated stochastic Navier-Stokes stepping
"""
Spectral integrator for

    du = (εΔu - P[(u·∇)u]) dt + Σ q_k e_k dW^k

restricted to the modes max(|k1|, |k2|) <= N. The viscous part is handled by
an exact integrating factor, the Leray-projected nonlinearity
pseudospectrally on an M x M grid with M > 3N (alias-free on the retained
modes), and the noise with the exact Ornstein-Uhlenbeck variance factor.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from backend.errors import AliasingError, NumericalInstabilityError, ValidationError
from backend.spectral.field import (
    SpectralVelocity,
    gradient_coefficients,
    mode_geometry,
    place_on_grid,
    project_grid,
    scalar_to_real,
    sobolev_norm,
)
from backend.spectral.forcing import ForcingSpec, NoiseStream, increment_array

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e8
SCHEMES = ("euler", "lawson4")
DIAGNOSTIC_COLUMNS = ["time", "energy", "enstrophy", "hs_norm"]


@dataclass(frozen=True)
class SimParams:
    """Numerical parameters of one SPDE run."""

    epsilon: float = 0.1
    dt: float = 1e-3
    N: int = 16
    M: int = 64
    nonlinear: bool = True
    scheme: str = "euler"
    inviscid: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.inviscid:
            if self.epsilon < 0:
                raise ValidationError(f"epsilon must be non-negative, got {self.epsilon}")
        elif not self.epsilon > 0:
            raise ValidationError(
                f"epsilon must be positive (epsilon = 0 needs the inviscid diagnostic mode), got {self.epsilon}"
            )
        if int(self.N) < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N}")
        if int(self.M) <= 3 * int(self.N):
            raise AliasingError(
                f"grid size M={self.M} aliases quadratic products of cutoff N={self.N}: need M > 3N = {3 * self.N}"
            )
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def to_manifest(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "dt": self.dt,
            "N": int(self.N),
            "M": int(self.M),
            "nonlinear": self.nonlinear,
            "scheme": self.scheme,
            "inviscid": self.inviscid,
        }


@dataclass(frozen=True)
class FlowState:
    """Velocity field at time = step·dt."""

    time: float
    field: SpectralVelocity
    step: int = 0


@dataclass
class SimulationResult:
    states: List[FlowState]
    diagnostics: pd.DataFrame


@dataclass
class StationarySample:
    fields: List[SpectralVelocity]
    times: List[float]
    energy_mean: float
    energy_std: float
    autocorrelation_time: float  # time units
    gap: float
    energies: np.ndarray = field(repr=False, default=None)


# ----------------------------
# Nonlinear term
# ----------------------------

def _bilinear_coeffs(a: np.ndarray, N: int, M: int) -> np.ndarray:
    f = SpectralVelocity(N, a)
    u = place_on_grid(f.vector_coeffs, N, M)
    grad = place_on_grid(gradient_coefficients(f), N, M)
    advection = np.einsum("jxy,ijxy->ixy", u, grad)
    return -scalar_to_real(project_grid(advection, N), N)


def bilinear_term(f: SpectralVelocity, params: SimParams) -> SpectralVelocity:
    """
    Galerkin projection of -P[(u·∇)u].

    Args:
        f: velocity with cutoff params.N
        params: provides the transform grid size M

    Returns:
        SpectralVelocity with the same cutoff
    """
    if f.cutoff != params.N:
        raise ValidationError(f"field cutoff {f.cutoff} does not match N={params.N}")
    return SpectralVelocity(f.cutoff, _bilinear_coeffs(f.coeffs, params.N, params.M))


# ----------------------------
# Stepping
# ----------------------------

class _Stepper:
    """Precomputed integrating factors and noise scales for one (params, forcing) pair."""

    def __init__(self, params: SimParams, spec: Optional[ForcingSpec]):
        N = int(params.N)
        if spec is not None and spec.cutoff != N:
            raise ValidationError(f"forcing cutoff {spec.cutoff} does not match N={N}")
        self.params = params
        self.N = N
        rate = params.epsilon * mode_geometry(N).ksq
        dt = params.dt
        self.decay = np.exp(-rate * dt)
        self.half_decay = np.exp(-rate * dt / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = np.where(rate > 0, -np.expm1(-2.0 * rate * dt) / (2.0 * rate), dt)
        q = spec.q if spec is not None else np.zeros_like(rate)
        self.noise_scale = q * np.sqrt(var) / np.sqrt(dt)
        self.forced = spec is not None and bool(np.any(q > 0))

    def drift(self, a: np.ndarray) -> np.ndarray:
        if not self.params.nonlinear:
            return np.zeros_like(a)
        return _bilinear_coeffs(a, self.N, int(self.params.M))

    def advance(self, a: np.ndarray, stream: Optional[NoiseStream], step_index: int) -> np.ndarray:
        dt = self.params.dt
        E, E2 = self.decay, self.half_decay
        if self.params.scheme == "lawson4" and self.params.nonlinear:
            k1 = self.drift(a)
            k2 = self.drift(E2 * (a + 0.5 * dt * k1))
            k3 = self.drift(E2 * a + 0.5 * dt * k2)
            k4 = self.drift(E * a + dt * E2 * k3)
            a_new = E * a + dt / 6.0 * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
        else:
            a_new = E * (a + dt * self.drift(a))
        if self.forced and stream is not None:
            a_new = a_new + self.noise_scale * increment_array(stream, step_index, self.N)
        a_new[self.N, self.N] = 0.0
        return a_new


@lru_cache(maxsize=16)
def _stepper(params: SimParams, spec: Optional[ForcingSpec]) -> _Stepper:
    return _Stepper(params, spec)


def _check_finite(a: np.ndarray, N: int, step_index: int):
    magnitude = np.abs(a)
    bad = ~np.isfinite(a) | (magnitude > BLOWUP_THRESHOLD)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        mode = (int(i) - N, int(j) - N)
        raise NumericalInstabilityError(
            f"coefficient of mode {mode} reached {a[i, j]!r} at step {step_index}; reduce dt",
            step=step_index,
            mode=mode,
        )


def step(
    state: FlowState,
    params: SimParams,
    spec: Optional[ForcingSpec],
    stream: Optional[NoiseStream],
    step_index: Optional[int] = None,
) -> FlowState:
    """
    Advance one time step.

    a_k <- e^(-ε|k|²dt)(a_k + dt·B_k(a)) + q_k φ_k(dt) ξ_k, with
    φ_k² = (1 - e^(-2ε|k|²dt))/(2ε|k|²) and ξ_k = ΔW^k/√dt from the stream.
    With spec or stream set to None the step is unforced.
    """
    n = state.step if step_index is None else int(step_index)
    if abs(state.time - n * params.dt) > 1e-9 * max(1.0, abs(state.time)):
        raise ValidationError(f"state time {state.time} does not match step {n}·dt = {n * params.dt}")
    if stream is not None and abs(stream.dt - params.dt) > 1e-15 * params.dt:
        raise ValidationError(f"noise stream dt={stream.dt} does not match dt={params.dt}")
    stepper = _stepper(params, spec)
    a_new = stepper.advance(state.field.coeffs, stream, n)
    _check_finite(a_new, stepper.N, n)
    return FlowState(time=(n + 1) * params.dt, field=SpectralVelocity(stepper.N, a_new), step=n + 1)


def _steps_for(T: float, dt: float, name: str = "T") -> int:
    if not T > 0:
        raise ValidationError(f"{name} must be positive, got {T}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-6 * dt:
        raise ValidationError(f"{name}={T} must be a positive multiple of dt={dt}")
    return n


def stream_trajectory(
    params: SimParams,
    spec: Optional[ForcingSpec],
    stream: Optional[NoiseStream],
    u0: Optional[SpectralVelocity] = None,
    n_steps: Optional[int] = None,
    start_step: int = 0,
) -> Iterator[FlowState]:
    """Yield the initial state and every subsequent state; unbounded if n_steps is None."""
    field0 = u0 if u0 is not None else SpectralVelocity.zeros(params.N)
    state = FlowState(time=start_step * params.dt, field=field0, step=start_step)
    yield state
    taken = 0
    while n_steps is None or taken < n_steps:
        state = step(state, params, spec, stream, state.step)
        taken += 1
        yield state


def diagnostics_row(state: FlowState, s: float) -> dict:
    f = state.field
    return {
        "time": state.time,
        "energy": f.energy,
        "enstrophy": f.enstrophy,
        "hs_norm": sobolev_norm(f, s),
    }


def simulate(
    params: SimParams,
    spec: Optional[ForcingSpec],
    seed: int,
    T: float,
    thin: int = 1,
    callbacks: Sequence[Callable[[FlowState], None]] = (),
    u0: Optional[SpectralVelocity] = None,
) -> SimulationResult:
    """
    Integrate over [0, T] and keep every `thin`-th state (including t = 0).

    Args:
        params: numerical parameters
        spec: forcing, or None for an unforced run
        seed: noise seed
        T: final time, a multiple of dt
        thin: storage stride in steps
        callbacks: called with each stored state (checkpoint writers)
        u0: initial field, zero by default

    Returns:
        SimulationResult with stored states and a diagnostics table
        (time, energy, enstrophy, hs_norm)
    """
    if thin < 1:
        raise ValidationError(f"thin must be a positive integer, got {thin}")
    n_steps = _steps_for(T, params.dt)
    s = spec.s if spec is not None else 4.0
    stream = NoiseStream(seed, params.dt) if spec is not None else None
    logger.info(
        f"Simulating N={params.N}, M={params.M}, eps={params.epsilon}, dt={params.dt}, "
        f"T={T} ({n_steps} steps, scheme={params.scheme}, seed={seed})"
    )

    states: List[FlowState] = []
    rows = []
    try:
        for state in stream_trajectory(params, spec, stream, u0, n_steps):
            if state.step % thin == 0 or state.step == n_steps:
                states.append(state)
                rows.append(diagnostics_row(state, s))
                for callback in callbacks:
                    callback(state)
    except NumericalInstabilityError as e:
        e.partial = states
        logger.error(f"✗ Simulation blew up at step {e.step}, mode {e.mode}; {len(states)} states kept")
        raise

    diagnostics = pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)
    logger.info(f"✓ Simulation finished: {len(states)} states stored, final energy {states[-1].field.energy:.6g}")
    return SimulationResult(states=states, diagnostics=diagnostics)


# ----------------------------
# Stationary statistics
# ----------------------------

def integrated_autocorrelation_time(series: Sequence[float], window_factor: float = 5.0) -> float:
    """
    Integrated autocorrelation time in samples, τ = 1 + 2 Σ ρ(t),
    summed up to the first window W with W >= window_factor·τ(W).
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / (n * var)
    tau = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n)
    ok = window >= window_factor * tau
    W = int(np.argmax(ok)) if np.any(ok) else n - 1
    return float(max(tau[W], 1.0))


def sample_stationary(
    params: SimParams,
    spec: ForcingSpec,
    seed: int,
    burn_in: float,
    n_samples: int,
    gap: float,
    u0: Optional[SpectralVelocity] = None,
) -> StationarySample:
    """
    Approximate draws from the stationary law: one run, burn-in, then a
    field every `gap` time units. The energy autocorrelation time measured
    after burn-in is reported; a gap below it is logged as a warning.
    """
    if n_samples < 1:
        raise ValidationError(f"n_samples must be positive, got {n_samples}")
    burn_steps = _steps_for(burn_in, params.dt, "burn_in")
    gap_steps = _steps_for(gap, params.dt, "gap")
    total = burn_steps + gap_steps * (n_samples - 1)
    stream = NoiseStream(seed, params.dt)

    fields, times, energies = [], [], []
    for state in stream_trajectory(params, spec, stream, u0, total):
        if state.step < burn_steps:
            continue
        energies.append(state.field.energy)
        if (state.step - burn_steps) % gap_steps == 0:
            fields.append(state.field)
            times.append(state.time)

    energies = np.array(energies)
    tau = integrated_autocorrelation_time(energies) * params.dt
    if n_samples > 1 and gap < tau:
        logger.warning(f"gap={gap} is shorter than the energy autocorrelation time {tau:.3g}; samples are correlated")
    logger.info(f"✓ Sampled {len(fields)} stationary fields (seed={seed}, tau_int={tau:.3g})")
    return StationarySample(
        fields=fields,
        times=times,
        energy_mean=float(energies.mean()),
        energy_std=float(energies.std()),
        autocorrelation_time=tau,
        gap=gap,
        energies=energies,
    )


def ou_check(
    params: SimParams,
    spec: ForcingSpec,
    seed: int,
    n_steps: int,
    burn_in: float = 0.0,
    lag: int = 1,
) -> pd.DataFrame:
    """
    Compare the linear (Stokes) subsystem with its closed-form OU law.

    The nonlinearity is switched off. Per retained mode the table gives the
    empirical mean and variance over n_steps post-burn-in steps, the
    analytic variance q²/(2ε|k|²), and the lag autocorrelation against
    e^(-ε|k|² lag·dt).
    """
    if n_steps < 2:
        raise ValidationError(f"ou_check needs at least 2 steps, got {n_steps}")
    if lag < 1 or lag >= n_steps:
        raise ValidationError(f"lag must lie in [1, n_steps), got {lag}")
    if params.epsilon <= 0:
        raise ValidationError("ou_check requires epsilon > 0")
    linear = replace(params, nonlinear=False, inviscid=False)
    N = linear.N
    burn_steps = int(round(burn_in / linear.dt)) if burn_in > 0 else 0
    stream = NoiseStream(seed, linear.dt)

    total = np.zeros((2 * N + 1, 2 * N + 1))
    total_sq = np.zeros_like(total)
    total_lag = np.zeros_like(total)
    history: deque = deque(maxlen=lag + 1)
    lag_count = 0
    for state in stream_trajectory(linear, spec, stream, None, burn_steps + n_steps - 1):
        if state.step < burn_steps:
            continue
        a = state.field.coeffs
        total += a
        total_sq += a * a
        history.append(a)
        if len(history) == lag + 1:
            total_lag += history[0] * a
            lag_count += 1

    mean = total / n_steps
    var = total_sq / n_steps - mean**2
    cov_lag = total_lag / lag_count - mean**2

    geo = mode_geometry(N)
    rate = linear.epsilon * geo.ksq
    rows = []
    for i in range(2 * N + 1):
        for j in range(2 * N + 1):
            if i == N and j == N:
                continue
            q = float(spec.q[i, j])
            analytic = q * q / (2.0 * rate[i, j])
            empirical = float(var[i, j])
            rows.append({
                "k1": i - N,
                "k2": j - N,
                "q": q,
                "mean": float(mean[i, j]),
                "empirical_var": empirical,
                "analytic_var": analytic,
                "rel_error": abs(empirical - analytic) / analytic if analytic > 0 else float("nan"),
                "empirical_acf": float(cov_lag[i, j] / empirical) if empirical > 0 else float("nan"),
                "analytic_acf": float(np.exp(-rate[i, j] * lag * linear.dt)),
            })
    table = pd.DataFrame(rows)
    worst = table["rel_error"].max()
    logger.info(f"✓ OU check over {n_steps} steps: worst relative variance error {worst:.3%}")
    return table
