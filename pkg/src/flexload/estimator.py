"""Per-load mismatch observer: unbiased minimum-variance filtering with an unknown input.

The grid model ``x[k+1] = A x[k] + B (u[k] + zeta[k])``, ``y[k] = C x[k+1] + xi``
has the mismatch u as an *unknown* input, so the state update cannot use a
Bu term. The filter therefore constrains its gain M to annihilate the
unknown-input direction,

    M C B = B,

which makes the error recursion e+ = (I - M C)(A e + B zeta) - M xi
independent of u (and, with noise on the input channel, of zeta as well).
Subject to that constraint the gain minimizes the trace of the error
covariance:

    P_pred = A P A' + Q,  S = C P_pred C' + R,  K = P_pred C' S^-1,
    M = K + (B - K C B) (B'C'S^-1 C B)^-1 B'C' S^-1.

With one output and one unknown input the constraint pins the gain to
M = B (CB)^-1 and the minimization is vacuous; the recursion is kept in the
general form and P still tracks the true error covariance.

The input estimate treats the newest output as error-free and solves the
state equation for the input that produced it:

    u_hat = (CB)^-1 (y - C A x_hat_prev),

an estimate of the input applied on the tick that emitted y. Under the
constrained gain the state update is unbiased for any input sequence, so
u_hat - u has zero mean.

Each load runs its own filter instance against its own noisy measurement.
The gain and covariance recursions are data-independent, so a bank of
filters (`EstimatorBank`) shares one P while keeping per-load states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputPath, EstimatorDiverged
from .plant import PlantModel

_P0_SCALE = 10.0  # initial covariance: large-but-finite prior
_ASYM_TOL = 1e-9


def check_prop1(model: PlantModel) -> bool:
    """True iff every eigenvalue of (I - B(CB)^-1 C) A lies inside the unit circle.

    This is the error-dynamics matrix of the constrained filter; inside the
    unit circle the estimation-error variance converges. The harness refuses
    to run the estimator when this fails.
    """
    cb = model.cb()
    if abs(cb) < 1e-15:
        raise DegenerateInputPath("C @ B = 0")
    n = model.n_states
    err_dyn = (np.eye(n) - model.B @ model.C / cb) @ model.A
    return bool(np.max(np.abs(np.linalg.eigvals(err_dyn))) < 1.0 - 1e-9)


@dataclass
class EstimatorState:
    x_hat: np.ndarray
    P: np.ndarray
    last_u_hat: float
    sigma_meas: float


def initial_estimator(model: PlantModel, sigma_meas: float) -> EstimatorState:
    n = model.n_states
    return EstimatorState(
        x_hat=np.zeros(n), P=_P0_SCALE * np.eye(n), last_u_hat=0.0, sigma_meas=sigma_meas
    )


def _gain_and_covariance(
    model: PlantModel, P: np.ndarray, sigma_meas: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """One covariance recursion step; returns (gain M, P_next, innovation var)."""
    A, B, C = model.A, model.B, model.C
    n = model.n_states
    q_noise = model.sigma_process**2 * (B @ B.T)
    r_noise = sigma_meas**2 + 1e-18  # floor keeps the inversion defined at zero noise
    p_pred = A @ P @ A.T + q_noise
    s = (C @ p_pred @ C.T).item() + r_noise
    k_gain = (p_pred @ C.T) / s
    cb = C @ B  # 1x1
    corr = np.linalg.solve(B.T @ C.T @ (C @ B) / s, B.T @ C.T / s)
    m_gain = k_gain + (B - k_gain @ cb) @ corr
    imc = np.eye(n) - m_gain @ C
    p_next = imc @ p_pred @ imc.T + m_gain @ m_gain.T * r_noise
    p_next = 0.5 * (p_next + p_next.T)
    return m_gain, p_next, s


def estimator_update(
    model: PlantModel, est: EstimatorState, y_meas: float
) -> tuple[EstimatorState, float]:
    """Absorb one noisy frequency measurement; returns (new state, u_hat in MW)."""
    residual = y_meas - (model.C @ (model.A @ est.x_hat)).item()
    u_hat = residual / model.cb()
    m_gain, p_next, _ = _gain_and_covariance(model, est.P, est.sigma_meas)
    x_next = model.A @ est.x_hat + m_gain[:, 0] * residual
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(p_next)) and np.isfinite(u_hat)):
        raise EstimatorDiverged("non-finite estimator state")
    asym = float(np.max(np.abs(p_next - p_next.T)))
    if asym > _ASYM_TOL:
        raise EstimatorDiverged(f"covariance asymmetry {asym:.3e}")
    return EstimatorState(x_next, p_next, float(u_hat), est.sigma_meas), float(u_hat)


class EstimatorBank:
    """Filters for all loads at once; per-load states, shared covariance.

    Equivalent to running `estimator_update` per load (the gain recursion
    does not depend on measurements), vectorized for large n. The per-load
    arithmetic is written elementwise so that updating any column slice
    gives bit-identical results to updating the whole bank: worker threads
    can split the loads without changing the output.
    """

    def __init__(self, model: PlantModel, n_loads: int, sigma_meas: float):
        if not check_prop1(model):
            raise DegenerateInputPath(
                "error dynamics are not stable; refusing to run the estimator"
            )
        self.model = model
        self.n_loads = n_loads
        self.sigma_meas = sigma_meas
        self.x_hat = np.zeros((model.n_states, n_loads))
        self.P = _P0_SCALE * np.eye(model.n_states)
        self._beta = 1.0 / model.cb()
        self._ca = (model.C @ model.A)[0]
        self._gain_cache = None  # set once P reaches its float fixpoint

    def step_slice(self, y_meas, u_hat_out, m_gain, sl: slice):
        """Measurement update for one column slice; elementwise, slice-invariant."""
        ns = self.model.n_states
        a = self.model.A
        residual = y_meas[sl].copy()
        for s in range(ns):
            residual -= self._ca[s] * self.x_hat[s, sl]
        u_hat_out[sl] = self._beta * residual
        new_cols = np.empty((ns, residual.size))
        for r in range(ns):
            acc = a[r, 0] * self.x_hat[0, sl]
            for s in range(1, ns):
                acc += a[r, s] * self.x_hat[s, sl]
            new_cols[r] = acc + m_gain[r, 0] * residual
        self.x_hat[:, sl] = new_cols

    def advance_gain(self) -> np.ndarray:
        """One shared covariance/gain recursion step; returns the gain.

        The recursion is data-independent and contracts to a fixpoint; once
        P stops changing at float resolution, further steps would reproduce
        it bit-for-bit, so the gain is cached and the recursion skipped.
        """
        if self._gain_cache is not None:
            return self._gain_cache
        m_gain, p_next, _ = _gain_and_covariance(self.model, self.P, self.sigma_meas)
        if np.array_equal(p_next, self.P):
            self._gain_cache = m_gain
        self.P = p_next
        return m_gain

    def update(self, y_meas: np.ndarray) -> np.ndarray:
        """Per-load measurements (Hz) -> per-load mismatch estimates (MW)."""
        m_gain = self.advance_gain()
        u_hat = np.empty(self.n_loads)
        self.step_slice(y_meas, u_hat, m_gain, slice(0, self.n_loads))
        if not np.all(np.isfinite(u_hat)):
            raise EstimatorDiverged("non-finite input estimate")
        return u_hat
