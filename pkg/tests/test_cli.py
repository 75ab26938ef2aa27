import csv
import json
import math

import numpy as np
import pytest

from fockshift import cli


def run(args):
    return cli.main([str(a) for a in args])


def test_unknown_schema_version_exits_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 99, "protocol": "simulate"}))
    assert run(["--out-dir", tmp_path, "simulate", "--config", cfg]) == 3


def test_invalid_json_exits_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert run(["--out-dir", tmp_path, "simulate", "--config", cfg]) == 3


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2


def test_simulate_writes_csv_svg_json(tmp_path):
    code = run(["--seed", 1, "--out-dir", tmp_path, "simulate",
                "--state", "fock:1,0", "--points", 9, "--t-max", 2.2e-3])
    assert code == 0
    assert (tmp_path / "trace.svg").exists()
    payload = json.loads((tmp_path / "simulate.json").read_text())
    assert payload["schema_version"] == 1
    with open(tmp_path / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert set(rows[0]) == {"time_s", "p_up", "shots", "ratio_label"}


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run(["--seed", 5, "--out-dir", out, "simulate",
             "--state", "fock:1,0", "--points", 5, "--t-max", 2e-3, "--shots", 50])
    assert (a / "trace.csv").read_text() == (b / "trace.csv").read_text()
    assert (a / "simulate.json").read_text() == (b / "simulate.json").read_text()
    assert (a / "trace.svg").read_bytes() == (b / "trace.svg").read_bytes()


def test_calibrate_offset(tmp_path):
    assert run(["--out-dir", tmp_path, "calibrate", "offset",
                "--residual-hz", 30.0]) == 0
    payload = json.loads((tmp_path / "calibrate.json").read_text())
    assert payload["residual_found_hz"] == pytest.approx(30.0, abs=2.0)


def test_single_shot_perfect_grid(tmp_path):
    code = run(["--seed", 3, "--out-dir", tmp_path, "single-shot",
                "--n-max", 2, "--bits", 2, "--shots", 50, "--perfect-detection"])
    assert code == 0
    payload = json.loads((tmp_path / "single_shot.json").read_text())
    assert np.allclose(payload["estimates"], np.eye(3))
    assert (tmp_path / "single_shot.svg").exists()
    assert (tmp_path / "single_shot.csv").exists()


def test_filter_subcommand(tmp_path):
    assert run(["--seed", 2, "--out-dir", tmp_path, "filter",
                "--alpha", 1.5, "--shots", 200]) == 0
    payload = json.loads((tmp_path / "filter.json").read_text())
    expected = (1 + math.exp(-2 * 1.5**2)) / 2
    assert payload["pass_probability_analytic"] == pytest.approx(expected, abs=1e-6)
    sigma = math.sqrt(expected * (1 - expected) / 200)
    assert payload["pass_fraction"] == pytest.approx(expected, abs=4 * sigma)


def test_fit_roundtrip_through_csv(tmp_path):
    sim_dir = tmp_path / "sim"
    cfg = tmp_path / "fit.json"
    cfg.write_text(json.dumps({
        "schema_version": 1, "protocol": "fit", "setting": "single_mode",
        "initial_state": {"kind": "cat", "alpha": 1.2, "sign": 1},
        "n_max": 4, "mode_dims": [9, 3],
        "times_s": {"start": 1e-4, "stop": 5e-3, "num": 25},
        "shots": 300, "gamma_per_s": [12.0, 0.0], "seed": 1}))
    assert run(["--out-dir", sim_dir, "fit", "--config", cfg]) == 0
    payload = json.loads((sim_dir / "fit.json").read_text())
    assert payload["sum_p"] == pytest.approx(1.0, abs=0.01)
    assert payload["parity"] == pytest.approx(1.0, abs=0.15)
    assert (sim_dir / "trace.csv").exists()
    assert (sim_dir / "populations.svg").exists()

    # refit from the written CSV
    fit_dir = tmp_path / "refit"
    assert run(["--out-dir", fit_dir, "fit", "--data", sim_dir / "trace.csv",
                "--settings", "single_mode", "--n-max", 4]) == 0
    payload2 = json.loads((fit_dir / "fit.json").read_text())
    for key, val in payload["populations"].items():
        assert payload2["populations"][key] == pytest.approx(val, abs=0.02)


def test_linearity_subcommand(tmp_path):
    assert run(["--seed", 4, "--out-dir", tmp_path, "linearity",
                "--n-top", 2]) == 0
    payload = json.loads((tmp_path / "linearity.json").read_text())
    assert payload["chi_eff_hz"][0] == pytest.approx(227.3, abs=8.0)


def test_preset_single_shot(tmp_path):
    assert run(["--out-dir", tmp_path, "single-shot",
                "--preset", "fig4_single_shot", "--shots", 80]) == 0
    payload = json.loads((tmp_path / "single_shot.json").read_text())
    assert payload["n_max"] == 3 and payload["bits"] == 2
    est = np.array(payload["estimates"])
    assert np.all(np.diag(est) > 0.9)


def test_json_keys_sorted(tmp_path):
    run(["--out-dir", tmp_path, "calibrate", "tpi"])
    text = (tmp_path / "calibrate.json").read_text()
    keys = [line.split('"')[1] for line in text.splitlines() if '":' in line]
    assert keys == sorted(keys)
