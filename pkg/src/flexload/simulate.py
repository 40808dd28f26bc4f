"""Closed-loop simulation driver, metrics, and file outputs.

Per tick k the loop runs: scheduled generation -> mismatch
u[k] = (g[k] - g*) - sum_i x_i[k] -> plant step with process noise ->
per-load noisy frequency measurement -> per-load mismatch estimate ->
algorithm round -> record. Row k therefore describes the tick-k snapshot:
the recorded u equals generation - g* - total_load_deviation exactly.

All noise is pre-derived from (master_seed, purpose, load id) streams and
drawn in fixed chunks, so results are byte-identical across runs and across
worker counts; worker threads only split per-load columns of already-
vectorized updates.

Distance-to-optimum diagnostics (y, z) are recorded per schedule segment
against that segment's centralized solution; they are observational here
(noise breaks monotonicity), the noiseless reference integrator is where
monotonicity is asserted.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .disutility import eval_vec, spec_arrays
from .dual_baseline import DualArrayEngine
from .errors import EstimatorDiverged, FlexloadError, SimulationDiverged
from .estimator import EstimatorBank
from .gradient_projection import ArrayEngine, dense_reference, step_sizes
from .oracle import check_optimality, solve_primal
from .plant import generation_at
from .scenario import Scenario
from .streams import derive_rng

_NOISE_CHUNK = 8192

COLUMNS = (
    "k",
    "t",
    "freq_deviation",
    "u",
    "mean_u_hat",
    "total_disutility",
    "y",
    "z",
    "generation",
    "total_load_deviation",
)


@dataclass
class Trajectory:
    columns: dict[str, np.ndarray]  # keyed by COLUMNS
    x: np.ndarray | None  # ticks x n when kept
    n: int
    completed_ticks: int

    def row_count(self) -> int:
        return self.completed_ticks


@dataclass(frozen=True)
class WindowMetrics:
    start_s: float
    end_s: float
    nadir_hz: float
    settling_time_s: float  # NaN when the band is never held to the window end


@dataclass(frozen=True)
class Metrics:
    windows: tuple[WindowMetrics, ...]
    terminal_optimality_gap: float
    total_disutility_integral: float


class _ScalarNoise:
    """One stream drawn in fixed chunks (chunking leaves the sequence unchanged)."""

    def __init__(self, rng):
        self.rng = rng
        self.buf = np.empty(0)
        self.pos = 0

    def next_tick(self) -> float:
        if self.pos >= self.buf.size:
            self.buf = self.rng.standard_normal(_NOISE_CHUNK)
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return float(v)


class _PerLoadNoise:
    """Independent per-load streams, materialized chunk-by-chunk as an (n, chunk) block."""

    def __init__(self, rngs):
        self.rngs = rngs
        self.buf = np.empty((len(rngs), 0))
        self.pos = 0

    def next_tick(self) -> np.ndarray:
        if self.pos >= self.buf.shape[1]:
            self.buf = np.stack([r.standard_normal(_NOISE_CHUNK) for r in self.rngs])
            self.pos = 0
        col = self.buf[:, self.pos]
        self.pos += 1
        return col


def _segment_critical_sets(scenario: Scenario):
    """Per schedule segment: (start_tick, critical intervals or None if infeasible)."""
    segments = []
    for start, level in scenario.schedule.steps:
        delta_g = level - scenario.g_star
        try:
            sol = solve_primal(scenario.specs, delta_g)
            lo = np.array([iv[0] for iv in sol.critical_sets])
            hi = np.array([iv[1] for iv in sol.critical_sets])
            segments.append((start, delta_g, lo, hi))
        except FlexloadError:
            segments.append((start, delta_g, None, None))
    return segments


def run(scenario: Scenario) -> tuple[Trajectory, Metrics]:
    """Simulate the full scenario; deterministic per seed.

    On divergence the partial trajectory is attached to the raised error as
    `.partial_trajectory` along with `.tick`.
    """
    n, ticks = scenario.n, scenario.ticks
    q, a, lo, hi = spec_arrays(scenario.specs)
    keep_loads = scenario.full_trace or n <= 32

    cols = {name: np.full(ticks, np.nan) for name in COLUMNS}
    x_trace = np.full((ticks, n), np.nan) if keep_loads else None

    engine = None
    dual_engine = None
    bank = None
    if scenario.algorithm == "dgp":
        engine = ArrayEngine(scenario.specs, scenario.topology, scenario.sched)
    elif scenario.algorithm == "dual":
        dual_engine = DualArrayEngine(scenario.specs, scenario.topology)
    if scenario.uses_estimator():
        bank = EstimatorBank(scenario.model, n, scenario.sigma_meas)

    proc_noise = _ScalarNoise(derive_rng(scenario.master_seed, "process-noise"))
    meas_noise = None
    if bank is not None:
        meas_noise = _PerLoadNoise(
            [derive_rng(scenario.master_seed, "measurement-noise", i) for i in range(n)]
        )

    pool = None
    chunk_slices = [slice(0, n)]
    if scenario.workers > 1 and bank is not None:
        bounds = np.linspace(0, n, scenario.workers + 1).astype(int)
        chunk_slices = [slice(b, e) for b, e in zip(bounds, bounds[1:]) if e > b]
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=scenario.workers)

    segments = _segment_critical_sets(scenario)
    change_ticks = set(scenario.schedule.change_ticks())
    gen_levels = np.array([generation_at(scenario.schedule, k) for k in range(ticks)])

    # plant step inlined (same update as plant.plant_step, minus per-tick objects)
    a_mat = scenario.model.A
    b_col = scenario.model.B[:, 0]
    c_row = scenario.model.C[0]
    x_s = np.zeros(scenario.model.n_states)

    x = np.zeros(n)
    k_offset = 0
    completed = 0
    try:
        for k in range(ticks):
            gen = float(gen_levels[k])
            delta_g = gen - scenario.g_star
            total_load = float(x.sum())
            u = delta_g - total_load

            zeta = scenario.sigma_process * proc_noise.next_tick()
            x_s = a_mat @ x_s + b_col * (u + zeta)
            d_omega = float(c_row @ x_s)
            if not -1e15 < d_omega < 1e15:  # catches nan and inf
                raise SimulationDiverged(f"non-finite frequency at tick {k}")

            if bank is not None:
                y_meas = d_omega + scenario.sigma_meas * meas_noise.next_tick()
                u_hats = _bank_update(bank, y_meas, pool, chunk_slices)
                mean_u_hat = float(u_hats.mean())
            elif scenario.algorithm in ("dgp", "dual"):  # bypass: perfect recovery
                u_hats = np.full(n, u)
                mean_u_hat = u
            else:
                u_hats = None
                mean_u_hat = np.nan

            seg_lo, seg_hi = _active_segment(segments, k)
            if seg_lo is not None:
                dist = np.maximum(np.maximum(seg_lo - x, x - seg_hi), 0.0)
                y_diag = float(dist.sum())
                z_diag = y_diag + abs(u)
            else:
                y_diag = z_diag = np.nan

            cols["k"][k] = k
            cols["t"][k] = k * scenario.T
            cols["freq_deviation"][k] = d_omega
            cols["u"][k] = u
            cols["mean_u_hat"][k] = mean_u_hat
            cols["total_disutility"][k] = float(eval_vec(q, a, x).sum())
            cols["y"][k] = y_diag
            cols["z"][k] = z_diag
            cols["generation"][k] = gen
            cols["total_load_deviation"][k] = total_load
            if keep_loads:
                x_trace[k] = x
            completed = k + 1

            if scenario.reset_on_disturbance and k in change_ticks:
                k_offset = k
            k_eff = k - k_offset
            if engine is not None:
                engine.tick(u_hats, k_eff)
                x = engine.x
            elif dual_engine is not None:
                _, gamma = step_sizes(scenario.sched, k_eff)
                dual_engine.tick(u_hats, gamma)
                x = dual_engine.x
    except (SimulationDiverged, EstimatorDiverged) as exc:
        traj = _finalize(cols, x_trace, n, completed)
        exc.tick = completed
        exc.partial_trajectory = traj
        raise
    finally:
        if pool is not None:
            pool.shutdown()

    traj = _finalize(cols, x_trace, n, ticks)
    return traj, compute_metrics(traj, scenario)


def _bank_update(bank, y_meas, pool, chunk_slices):
    if pool is None:
        return bank.update(y_meas)
    # per-load columns are independent; the shared gain advances once
    m_gain = bank.advance_gain()
    u_hat = np.empty(bank.n_loads)
    list(pool.map(lambda sl: bank.step_slice(y_meas, u_hat, m_gain, sl), chunk_slices))
    if not np.all(np.isfinite(u_hat)):
        raise EstimatorDiverged("non-finite input estimate")
    return u_hat


def _active_segment(segments, k):
    active = segments[0]
    for seg in segments:
        if seg[0] <= k:
            active = seg
        else:
            break
    return active[2], active[3]


def _finalize(cols, x_trace, n, completed) -> Trajectory:
    cols = {name: arr[:completed] for name, arr in cols.items()}
    x = x_trace[:completed] if x_trace is not None else None
    return Trajectory(columns=cols, x=x, n=n, completed_ticks=completed)


def compute_metrics(traj: Trajectory, scenario: Scenario) -> Metrics:
    """Per-contingency-window nadir and settling time, terminal gap, cost integral."""
    ticks = traj.completed_ticks
    freq = traj.columns["freq_deviation"]
    change_ticks = [k for k in scenario.schedule.change_ticks() if k < ticks]
    starts = change_ticks if change_ticks else [0]
    bounds = starts + [ticks]

    windows = []
    band = scenario.settling_band
    for w0, w1 in zip(bounds, bounds[1:]):
        seg = freq[w0:w1]
        nadir = float(np.min(seg, initial=0.0))
        inside = np.abs(seg) <= band
        settled_at = None
        run_start = None
        for i, ok in enumerate(inside):
            if ok and run_start is None:
                run_start = i
            elif not ok:
                run_start = None
        if run_start is not None:
            settled_at = run_start * scenario.T
        windows.append(
            WindowMetrics(
                start_s=w0 * scenario.T,
                end_s=w1 * scenario.T,
                nadir_hz=nadir,
                settling_time_s=np.nan if settled_at is None else settled_at,
            )
        )

    gap = np.nan
    if traj.x is not None and ticks > 0:
        final_x = traj.x[-1]
        final_delta_g = traj.columns["generation"][-1] - scenario.g_star
        report = check_optimality(scenario.specs, final_x, float(final_delta_g), tol=1e-9)
        gap = max(report.sum_violation, _max_gradient_gap(scenario.specs, final_x, report.lambda_used))
    cost_integral = float(np.nansum(traj.columns["total_disutility"]) * scenario.T)
    return Metrics(
        windows=tuple(windows),
        terminal_optimality_gap=float(gap),
        total_disutility_integral=cost_integral,
    )


def _max_gradient_gap(specs, x, lam, bound_tol=1e-9):
    from .disutility import grad

    worst = 0.0
    for s, v in zip(specs, x):
        g = grad(s, float(v))
        if v >= s.box_hi - bound_tol:
            worst = max(worst, g - lam)
        elif v <= s.box_lo + bound_tol:
            worst = max(worst, lam - g)
        else:
            worst = max(worst, abs(g - lam))
    return worst


def write_trajectory_csv(traj: Trajectory, path, one_based_load_ids: bool = True):
    """Fixed column order; full-precision floats so re-parsing round-trips."""
    header = list(COLUMNS)
    if traj.x is not None:
        offset = 1 if one_based_load_ids else 0
        header += [f"x_{i + offset}" for i in range(traj.n)]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(traj.completed_ticks):
            vals = [traj.columns[name][row] for name in COLUMNS]
            if traj.x is not None:
                vals += list(traj.x[row])
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def _fmt(v) -> str:
    f = float(v)
    if f != f:
        return "nan"
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def run_debug_reference(scenario: Scenario) -> np.ndarray:
    """Matrix-form replay of a noise-free bypass run; cross-check for the driver."""
    lap = scenario.topology.laplacian().astype(float)
    x = np.zeros(scenario.n)
    for k in range(scenario.ticks):
        delta_g = generation_at(scenario.schedule, k) - scenario.g_star
        u = delta_g - x.sum()
        x = dense_reference(
            x, scenario.specs, lap, np.full(scenario.n, u), scenario.sched, k
        )
    return x
