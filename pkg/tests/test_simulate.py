import numpy as np
import pytest

from flexload.scenario import build_scenario
from flexload.simulate import compute_metrics, run, run_debug_reference, write_trajectory_csv


def doc(**overrides):
    base = {
        "loads": {"count": 6},
        "run": {"ticks": 80, "master_seed": 1},
    }
    for section, keys in overrides.items():
        base.setdefault(section, {}).update(keys)
    return base


def quiet_doc(**overrides):
    # flat schedule at nominal, no noise: stays at equilibrium
    return doc(
        noise={"process_std": 0.0, "measurement_std": 0.0},
        schedule={"nominal": 100.0, "steps": [[0.0, 100.0]]},
        **overrides,
    )


@pytest.mark.parametrize("alg,family", [("dgp", "flat_quadratic"), ("dual", "quadratic"), ("none", "flat_quadratic")])
def test_equilibrium_run_is_identically_zero(alg, family):
    traj, metrics = run(
        build_scenario(quiet_doc(loads={"family": family}, algorithm={"kind": alg}))
    )
    for col in ("freq_deviation", "u", "total_disutility", "total_load_deviation"):
        assert np.all(traj.columns[col] == 0.0)
    assert np.all(traj.x == 0.0)
    assert metrics.windows[0].nadir_hz == 0.0
    assert metrics.windows[0].settling_time_s == 0.0


def test_energy_bookkeeping_exact():
    sc = build_scenario(doc(run={"ticks": 300}))
    traj, _ = run(sc)
    lhs = traj.columns["u"]
    rhs = (traj.columns["generation"] - sc.g_star) - traj.columns["total_load_deviation"]
    assert np.array_equal(lhs, rhs)


def test_determinism_across_runs_and_workers(tmp_path):
    paths = []
    for name, workers in [("a", 1), ("b", 1), ("c", 4)]:
        d = doc(run={"ticks": 120, "master_seed": 7, "workers": workers})
        traj, _ = run(build_scenario(d))
        p = tmp_path / f"{name}.csv"
        write_trajectory_csv(traj, p)
        paths.append(p)
    blobs = [p.read_bytes() for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_different_seeds_differ():
    t1, _ = run(build_scenario(doc(run={"ticks": 60, "master_seed": 1})))
    t2, _ = run(build_scenario(doc(run={"ticks": 60, "master_seed": 2})))
    assert not np.array_equal(t1.columns["freq_deviation"], t2.columns["freq_deviation"])


def test_bypass_run_matches_dense_reference():
    sc = build_scenario(
        doc(
            loads={"count": 12},
            noise={"process_std": 0.0, "measurement_std": 0.0},
            algorithm={"bypass_estimator": True},
            run={"ticks": 400, "master_seed": 5, "full_trace": True},
        )
    )
    traj, _ = run(sc)
    ref_terminal = run_debug_reference(sc)
    # trajectory records x at the last tick *before* its update; step once more
    assert traj.x.shape == (400, 12)
    final_recorded = traj.x[-1]
    # the reference is the state after `ticks` updates; compare the recorded
    # state after ticks-1 updates by replaying one step short
    sc_short = build_scenario(
        doc(
            loads={"count": 12},
            noise={"process_std": 0.0, "measurement_std": 0.0},
            algorithm={"bypass_estimator": True},
            run={"ticks": 399, "master_seed": 5, "full_trace": True},
        )
    )
    ref_short = run_debug_reference(sc_short)
    assert np.allclose(final_recorded, ref_short, rtol=0, atol=1e-12)


def test_loads_respond_to_contingency():
    sc = build_scenario(
        doc(
            loads={"count": 20},
            schedule={"nominal": 100.0, "steps": [[0.0, 100.0], [2.0, 95.0]]},
            run={"ticks": 300, "master_seed": 3},
        )
    )
    traj, metrics = run(sc)
    # after the loss, loads absorb most of the 5 MW deviation
    assert traj.columns["total_load_deviation"][-1] == pytest.approx(-5.0, abs=1.0)
    assert metrics.windows[0].nadir_hz < 0


def test_none_algorithm_keeps_loads_frozen():
    sc = build_scenario(doc(algorithm={"kind": "none"}, run={"ticks": 250}))
    traj, _ = run(sc)
    assert np.all(traj.columns["total_load_deviation"] == 0.0)
    assert np.all(np.isnan(traj.columns["mean_u_hat"]))
    # frequency dips at the 20 s step (tick 200) under generator-only control
    assert traj.columns["freq_deviation"][210] < -0.01


def test_full_trace_flag_controls_per_load_columns(tmp_path):
    sc = build_scenario(doc(loads={"count": 40}, run={"ticks": 10}))
    traj, _ = run(sc)
    assert traj.x is None  # 40 > 32 and no full trace
    p = tmp_path / "t.csv"
    write_trajectory_csv(traj, p)
    header = p.read_text().splitlines()[0]
    assert "x_1" not in header

    sc2 = build_scenario(doc(loads={"count": 40}, run={"ticks": 10, "full_trace": True}))
    traj2, _ = run(sc2)
    assert traj2.x.shape == (10, 40)
    p2 = tmp_path / "t2.csv"
    write_trajectory_csv(traj2, p2)
    header2 = p2.read_text().splitlines()[0]
    assert header2.endswith("x_40")
    assert ",x_1," in header2


def test_csv_round_trip_exact(tmp_path):
    sc = build_scenario(doc(run={"ticks": 40}))
    traj, _ = run(sc)
    p = tmp_path / "t.csv"
    write_trajectory_csv(traj, p)
    data = np.genfromtxt(p, delimiter=",", names=True)
    assert np.array_equal(data["u"], traj.columns["u"])
    assert np.array_equal(data["freq_deviation"], traj.columns["freq_deviation"])


def test_synthetic_metrics_nadir():
    sc = build_scenario(quiet_doc())
    traj, _ = run(sc)
    traj.columns["freq_deviation"][10] = -0.3
    metrics = compute_metrics(traj, sc)
    assert metrics.windows[0].nadir_hz == pytest.approx(-0.3)


def test_estimator_tracks_mismatch():
    sc = build_scenario(
        doc(
            loads={"count": 5},
            schedule={"nominal": 100.0, "steps": [[0.0, 100.0], [1.0, 97.0]]},
            run={"ticks": 200, "master_seed": 11},
        )
    )
    traj, _ = run(sc)
    err = traj.columns["mean_u_hat"][15:] - traj.columns["u"][15:]
    assert np.abs(err).mean() < 0.5  # estimate follows the true mismatch


def test_dual_run_executes():
    sc = build_scenario(
        doc(
            loads={"count": 8, "family": "quadratic"},
            algorithm={"kind": "dual"},
            run={"ticks": 150, "master_seed": 2},
        )
    )
    traj, _ = run(sc)
    assert np.isfinite(traj.columns["freq_deviation"]).all()


def test_diagnostics_columns_present():
    sc = build_scenario(doc(run={"ticks": 250}))
    traj, _ = run(sc)
    assert np.isfinite(traj.columns["y"]).all()
    assert np.isfinite(traj.columns["z"]).all()
    # before the first contingency, the target is 0 deviation: y = z = 0 at start
    assert traj.columns["y"][0] == 0.0


def test_step_schedule_reset_extension():
    base = dict(
        loads={"count": 6, "family": "quadratic"},
        schedule={"nominal": 100.0, "steps": [[0.0, 100.0], [2.0, 97.0]]},
        noise={"process_std": 0.0, "measurement_std": 0.0},
        algorithm={"bypass_estimator": True},
    )
    plain, _ = run(build_scenario(doc(**base, run={"ticks": 100, "master_seed": 1})))
    reset_doc = doc(**base, run={"ticks": 100, "master_seed": 1})
    reset_doc["algorithm"]["reset_on_disturbance"] = True
    reset, _ = run(build_scenario(reset_doc))
    # identical until the 2 s event, larger steps (fresh gamma) afterwards
    assert np.array_equal(
        plain.columns["total_load_deviation"][:21], reset.columns["total_load_deviation"][:21]
    )
    assert not np.array_equal(
        plain.columns["total_load_deviation"][21:], reset.columns["total_load_deviation"][21:]
    )
    assert np.isfinite(reset.columns["freq_deviation"]).all()


def test_terminal_optimality_gap_small_for_long_low_noise_run():
    sc = build_scenario(
        doc(
            loads={"count": 8, "family": "quadratic"},
            schedule={"nominal": 100.0, "steps": [[0.0, 98.0]]},
            noise={"process_std": 0.05, "measurement_std": 1e-5},
            run={"ticks": 60_000, "master_seed": 2},
        )
    )
    _, metrics = run(sc)
    assert metrics.terminal_optimality_gap <= 5e-2
