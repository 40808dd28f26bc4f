"""Discrete-time LTI grid-frequency model driven by the consumption-generation mismatch.

Continuous model (single-frequency grid, swing dynamics plus a first-order
droop governor):

    M * d(dw)/dt   = p_m + u - D * dw
    tau * d(p_m)/dt = -p_m - (1/R) * dw            [+ z with the integral trim]
    d(z)/dt        = -K_I * dw                     [integral trim only]

with dw the frequency deviation from nominal (Hz), p_m the governor power
deviation (MW), u the exogenous mismatch input (MW, generation deviation
minus total load deviation), M inertia (MW*s/Hz), D load damping (MW/Hz),
tau the governor time constant (s), R the droop (Hz/MW).

Discretization is exact zero-order-hold (matrix exponential), so spectral
checks and the observer's C@B are evaluated on the true discrete model.
The output is y = dw taken *after* the state update: one call to
``plant_step`` applies u[k] and emits dw reflecting it, which makes the
estimator's previous-input recovery well-posed.

Steady state under constant u: with the default droop-only governor the
frequency settles at the droop offset u / (D + 1/R), not at zero; enabling
the optional integral trim (integral_gain > 0) restores it to zero.
Process noise is additive on the input channel (u + noise), Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateInputPath, InvalidParam, SimulationDiverged, UnstablePlant

_STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class PlantParams:
    """Continuous-time model constants; all config-overridable."""

    inertia: float = 10.0  # M, MW*s/Hz
    damping: float = 1.0  # D, MW/Hz
    governor_time_constant: float = 5.0  # tau, s
    droop: float | None = 0.05  # R, Hz/MW; None disables the governor loop
    integral_gain: float = 0.0  # K_I, MW/(Hz*s); 0 disables the trim
    nominal_frequency: float = 60.0  # Hz, bookkeeping only

    def __post_init__(self):
        if self.inertia <= 0:
            raise InvalidParam(f"inertia must be > 0, got {self.inertia}")
        if self.damping < 0:
            raise InvalidParam(f"damping must be >= 0, got {self.damping}")
        if self.governor_time_constant <= 0:
            raise InvalidParam("governor time constant must be > 0")
        if self.droop is not None and self.droop <= 0:
            raise InvalidParam(f"droop must be > 0 (or None to disable), got {self.droop}")
        if self.integral_gain < 0:
            raise InvalidParam(f"integral gain must be >= 0, got {self.integral_gain}")


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray  # column vector, MW input channel
    C: np.ndarray  # row vector, Hz output
    T: float  # discretization interval, s
    sigma_process: float  # input-channel noise std dev, MW
    params: PlantParams

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def cb(self) -> float:
        return (self.C @ self.B).item()

    def dc_gain(self) -> float:
        """Steady-state Hz per MW of constant input: C (I - A)^-1 B."""
        n = self.n_states
        return (self.C @ np.linalg.solve(np.eye(n) - self.A, self.B)).item()


@dataclass
class PlantState:
    x: np.ndarray
    k: int = 0


def _continuous_matrices(p: PlantParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    inv_r = 0.0 if p.droop is None else 1.0 / p.droop
    m, d, tau = p.inertia, p.damping, p.governor_time_constant
    if p.integral_gain > 0:
        a = np.array(
            [
                [-d / m, 1.0 / m, 0.0],
                [-inv_r / tau, -1.0 / tau, 1.0 / tau],
                [-p.integral_gain, 0.0, 0.0],
            ]
        )
        b = np.array([[1.0 / m], [0.0], [0.0]])
        c = np.array([[1.0, 0.0, 0.0]])
    else:
        a = np.array([[-d / m, 1.0 / m], [-inv_r / tau, -1.0 / tau]])
        b = np.array([[1.0 / m], [0.0]])
        c = np.array([[1.0, 0.0]])
    return a, b, c


def build_plant(params: PlantParams, T: float, sigma_process: float = 0.5) -> PlantModel:
    """Exact ZOH discretization; validates stability and the input path.

    Raises UnstablePlant when the discrete spectral radius reaches 1 (e.g.
    damping 0 with the governor disabled leaves a pure integrator) and
    DegenerateInputPath when C @ B vanishes.
    """
    if T <= 0:
        raise InvalidParam(f"discretization interval must be > 0, got {T}")
    if sigma_process < 0:
        raise InvalidParam("process noise std dev must be >= 0")
    a_c, b_c, c = _continuous_matrices(params)
    n = a_c.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a_c * T
    aug[:n, n:] = b_c * T
    exp_aug = scipy.linalg.expm(aug)
    a_d = exp_aug[:n, :n]
    b_d = exp_aug[:n, n:]
    model = PlantModel(A=a_d, B=b_d, C=c, T=T, sigma_process=sigma_process, params=params)
    rho = model.spectral_radius()
    if rho >= 1.0 - _STABILITY_MARGIN:
        raise UnstablePlant(f"discretized model has spectral radius {rho:.12f}")
    if abs(model.cb()) < 1e-15:
        raise DegenerateInputPath("C @ B = 0: mismatch input is unobservable in one step")
    return model


def initial_state(model: PlantModel) -> PlantState:
    return PlantState(x=np.zeros(model.n_states), k=0)


def plant_step(
    model: PlantModel, state: PlantState, u: float, noise_sample: float = 0.0
) -> tuple[PlantState, float]:
    """Advance one tick under mismatch u (MW); returns (state', dw in Hz).

    The emitted frequency deviation is the post-update output C x[k+1].
    """
    x_next = model.A @ state.x + model.B[:, 0] * (u + noise_sample)
    if not np.all(np.isfinite(x_next)):
        raise SimulationDiverged(f"non-finite plant state at tick {state.k}")
    d_omega = float(model.C[0] @ x_next)
    return PlantState(x=x_next, k=state.k + 1), d_omega


@dataclass(frozen=True)
class GenerationSchedule:
    """Piecewise-constant generation levels: ((start_tick, level_MW), ...)."""

    steps: tuple[tuple[int, float], ...]
    g_star: float  # nominal generation, MW

    def __post_init__(self):
        if not self.steps:
            raise InvalidParam("schedule needs at least one step")
        if self.steps[0][0] != 0:
            raise InvalidParam("first schedule entry must start at tick 0")
        ticks = [s[0] for s in self.steps]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise InvalidParam("schedule start ticks must be strictly increasing")

    def change_ticks(self) -> tuple[int, ...]:
        """Ticks at which the level actually changes (excludes tick 0)."""
        out = []
        prev = self.steps[0][1]
        for tick, level in self.steps[1:]:
            if level != prev:
                out.append(tick)
            prev = level
        return tuple(out)


def schedule_from_times(
    step_times: list[tuple[float, float]], g_star: float, T: float
) -> GenerationSchedule:
    """Build a schedule from (time_s, level_MW) pairs on a tick grid of T seconds."""
    steps = tuple((int(round(t / T)), float(level)) for t, level in step_times)
    return GenerationSchedule(steps=steps, g_star=g_star)


def generation_at(schedule: GenerationSchedule, k: int) -> float:
    """Generation level (MW) at tick k >= 0."""
    if k < 0:
        raise InvalidParam(f"tick must be >= 0, got {k}")
    level = schedule.steps[0][1]
    for start, value in schedule.steps:
        if k >= start:
            level = value
        else:
            break
    return level


def default_schedule(T: float = 0.1) -> GenerationSchedule:
    """Two-contingency default: 200 MW nominal, down to 190 at 20 s, 170 at 50 s."""
    return schedule_from_times([(0.0, 200.0), (20.0, 190.0), (50.0, 170.0)], 200.0, T)
