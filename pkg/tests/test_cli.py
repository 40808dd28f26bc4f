import json

import pytest
import yaml

from flexload.cli import main


@pytest.fixture
def config_path(tmp_path):
    doc = {
        "loads": {"count": 8, "family": "quadratic"},
        "schedule": {"nominal": 100.0, "steps": [[0.0, 100.0], [1.0, 96.0]]},
        "run": {"ticks": 120, "master_seed": 1},
    }
    p = tmp_path / "scenario.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def test_run_writes_outputs(tmp_path, config_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--config", str(config_path), "--out", str(out), "--seed", "3"])
    assert rc == 0
    assert (out / "trajectory.csv").exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["windows"][0]["nadir_hz"] <= 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("k,t,freq_deviation,u,mean_u_hat,total_disutility,y,z,")
    assert "x_8" in header  # 8 <= 32: per-load columns on


def test_run_algorithm_override(tmp_path, config_path):
    out = tmp_path / "out"
    rc = main(["run", "--config", str(config_path), "--out", str(out), "--algorithm", "none"])
    assert rc == 0
    csv = (out / "trajectory.csv").read_text().splitlines()
    row = csv[1].split(",")
    assert row[4] == "nan"  # mean_u_hat not estimated without an algorithm


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({"loads": {"count": 4}, "run": {"ticks": 5}, "oops": {}}))
    rc = main(["run", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 2


def test_dual_on_flat_family_is_config_error(tmp_path):
    p = tmp_path / "flat.yaml"
    p.write_text(
        yaml.safe_dump(
            {
                "loads": {"count": 4},
                "algorithm": {"kind": "dual"},
                "run": {"ticks": 5},
            }
        )
    )
    rc = main(["run", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 2


def test_check_command(config_path, capsys):
    rc = main(["check", "--config", str(config_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "connected = True" in out
    assert "error dynamics stable = True" in out
    assert "ok" in out


def test_oracle_command(tmp_path, config_path, capsys):
    out_csv = tmp_path / "oracle.csv"
    rc = main(["oracle", "--config", str(config_path), "--out", str(out_csv)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "optimal gradient" in text
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "segment_start_tick,generation,load,x_star"
    assert len(lines) == 1 + 2 * 8  # two segments, eight loads


def test_counterexample_command(capsys):
    rc = main(["counterexample"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "terminal point optimal: False" in out
    assert "strictly feasible: False" in out


def test_compare_command(tmp_path, config_path, capsys):
    out = tmp_path / "cmp"
    rc = main(["compare", "--config", str(config_path), "--out", str(out), "--seed", "2"])
    assert rc == 0
    report = (out / "ordering_report.txt").read_text()
    assert "dgp" in report and "none" in report
    assert (out / "comparison.csv").exists()


def test_compare_flat_marks_dual_inapplicable(tmp_path, capsys):
    p = tmp_path / "flat.yaml"
    p.write_text(
        yaml.safe_dump(
            {
                "loads": {"count": 6},
                "schedule": {"nominal": 100.0, "steps": [[0.0, 100.0], [1.0, 97.0]]},
                "run": {"ticks": 80, "master_seed": 1},
            }
        )
    )
    out = tmp_path / "cmp"
    rc = main(["compare", "--config", str(p), "--out", str(out)])
    assert rc == 0
    report = (out / "ordering_report.txt").read_text()
    assert "dual: not run" in report


def test_run_with_plots(tmp_path, config_path):
    out = tmp_path / "out"
    rc = main(["run", "--config", str(config_path), "--out", str(out), "--plot"])
    assert rc == 0
    for name in ("frequency.png", "mismatch.png", "disutility.png"):
        assert (out / name).exists()
