import csv
import hashlib
import json

import pytest

from lostsales.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

TWO_POINT = {"atoms": [0, 2], "probs": [0.5, 0.5]}


def _run(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, str(path), "--out", str(out), *extra]), out


def test_constants(tmp_path):
    code, out = _run(tmp_path, "constants", {"demand": TWO_POINT, "rates": [0.5], "eps": [0.5]})
    assert code == EXIT_OK
    js = json.loads((out / "constants.json").read_text())
    assert js["m"] == 16900 and js["schema"] == "1" and "config_hash" in js


def test_manifest_checksums(tmp_path):
    code, out = _run(tmp_path, "lindley", {"demand": TWO_POINT, "r": 0.5, "samples": 2000})
    assert code == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["seed"] == 0
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_reruns_byte_identical(tmp_path):
    cfg = {"demand": TWO_POINT, "L": 2, "T": 10, "reps": 500, "c": 4}
    _, a = _run(tmp_path, "simulate", cfg, "--seed", "7", name="a")
    _, b = _run(tmp_path, "simulate", cfg, "--seed", "7", name="b")
    _, c = _run(tmp_path, "simulate", cfg, "--seed", "8", name="c")
    ma = json.loads((a / "manifest.json").read_text())["outputs"]
    mb = json.loads((b / "manifest.json").read_text())["outputs"]
    mc = json.loads((c / "manifest.json").read_text())["outputs"]
    assert ma == mb
    assert ma["trajectory.csv"] != mc["trajectory.csv"]


def test_simulate_exact(tmp_path):
    cfg = {"demand": TWO_POINT, "L": 2, "T": 8, "reps": 20000, "c": 4, "exact": True}
    code, out = _run(tmp_path, "simulate", cfg)
    js = json.loads((out / "cost.json").read_text())
    assert code == EXIT_OK
    assert abs(js["mean"] - js["exact"]) < 4 * js["stderr"]


def test_dp_outputs_and_figures(tmp_path):
    cfg = {"demand": TWO_POINT, "L": 2, "T": 6, "c": 4}
    code, out = _run(tmp_path, "dp", cfg)
    assert code == EXIT_OK
    js = json.loads((out / "dp.json").read_text())
    assert js["ratio"] >= 1 and js["OPT"] >= js["T_times_g"]
    assert (out / "table.npz").exists()
    code, out = _run(tmp_path, "z-search", cfg, "--figures", name="fig")
    assert code == EXIT_OK and (out / "z_search.png").stat().st_size > 0


def test_ratio_table_recomputable(tmp_path):
    cfg = {"demands": [TWO_POINT], "L_grid": [2], "c_over_h": [1, 4], "T": 6}
    code, out = _run(tmp_path, "ratio-table", cfg, "--figures")
    assert code == EXIT_OK
    with open(out / "ratio_table.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["L"] != "summary"]
    assert len(rows) == 2
    for r in rows:
        assert float(r["ratio"]) == pytest.approx(float(r["cost_pi_z"]) / float(r["OPT"]), rel=1e-12)
    assert (out / "ratio_table.png").exists()


def test_gap_and_degenerate(tmp_path):
    code, out = _run(tmp_path, "gap", {"demand": TWO_POINT, "L": 3, "samples": 20000})
    assert code == EXIT_OK
    assert json.loads((out / "gap.json").read_text())["gap"]["pass"] is True
    code, out = _run(tmp_path, "gap", {"demand": TWO_POINT, "L": 2, "c": 4, "samples": 100}, name="deg")
    assert code == EXIT_FAIL
    assert "degenerate" in json.loads((out / "gap.json").read_text())


def test_lower_bound(tmp_path):
    code, out = _run(tmp_path, "lower-bound", {"demand": TWO_POINT, "L": 3})
    js = json.loads((out / "lower_bound.json").read_text())
    assert code == EXIT_OK and js["objective"] <= js["zero_solution_value"]


def test_config_errors(tmp_path):
    assert _run(tmp_path, "lindley", {"demand": TWO_POINT})[0] == EXIT_CONFIG
    assert _run(tmp_path, "dp", {"demand": {"atoms": [0, 1], "probs": [0.2, 0.2]}, "L": 1, "T": 2})[0] == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["constants", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["constants", str(tmp_path / "missing.json"), "--out", str(tmp_path / "y")]) == EXIT_CONFIG


def test_budget_exceeded(tmp_path):
    cfg = {"demand": {"family": "geometric", "mean": 5}, "L": 4, "T": 8, "c": 19, "state_budget": 1000}
    code, out = _run(tmp_path, "dp", cfg)
    assert code == EXIT_BUDGET
    assert json.loads((out / "manifest.json").read_text())["status"] == "budget_exceeded"


def test_verify_subset(tmp_path, capsys):
    code, out = _run(tmp_path, "verify", {"criteria": [4, 11]})
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all("PASS" in ln for ln in lines)
