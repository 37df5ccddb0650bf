import csv
import json
import math
import subprocess
import sys

import pytest

from bdsde_lab.cli import SCHEMAS, main

INLINE = {
    "dims": {"k": 2},
    "f": ["0", "0"],
    "g": ["y2 / (1 + t*t)", "0"],
    "u": "1 / (1 + t*t)",
    "features": ["1 / (1 + t*t)"],
}
CONFIGS = {
    "gronwall": {"experiment": "gronwall", "gronwall": {"A": 1, "M": 2, "r": "1/(1+t*t)"}},
    "ito": {"experiment": "ito_check", "ito": {"beta": "0", "gamma": "0", "delta": "0"}, "mc": {"paths": 500}},
    "solve": {"experiment": "solve", "problem": "example7", "grid": {"steps": 16, "T": 8}, "mc": {"paths": 512}},
    "compare": {
        "experiment": "compare",
        "problems": [{"name": "example7", "xi": 1}, {"name": "example7", "xi": 0}],
        "grid": {"steps": 32, "T": 16},
        "mc": {"paths": 1024, "seed": 1},
    },
    "cross": {
        "experiment": "compare",
        "problems": [dict(INLINE, xi=["0", "0.5"]), dict(INLINE, xi=["0", "0"])],
        "grid": {"T": 4, "steps": 32, "kind": "uniform"},
        "mc": {"paths": 1024},
    },
    "assumptions": {"experiment": "assumptions", "problem": "example7", "assumptions": {"n_samples": 100}},
}


def run(tmp_path, name, *extra, raw=None):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(CONFIGS[name] if raw is None else raw))
    out = tmp_path / f"out_{name}_{len(list(tmp_path.iterdir()))}"
    status = main(["--config", str(path), "--out", str(out), "--quiet", *extra])
    return status, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gronwall_bound(tmp_path):
    status, out = run(tmp_path, "gronwall")
    assert status == 0
    rows = read_csv(out / "results.csv")
    assert rows[0] == list(SCHEMAS["gronwall"])
    assert float(rows[1][1]) == pytest.approx(math.exp(math.pi), rel=1e-6)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] is True


def test_manifest(tmp_path):
    status, out = run(tmp_path, "gronwall")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == status == 0
    assert manifest["config"]["gronwall"]["points"] == 11
    assert "gronwall.points = 11" in manifest["defaults_applied"]
    assert set(manifest["files"]) == {"results.csv", "summary.json"}
    for key in ("seed", "version", "started_at", "wall_time_s"):
        assert key in manifest
    assert (out / "run.log").exists()


def test_ito_zero_integrands(tmp_path):
    status, out = run(tmp_path, "ito")
    assert status == 0
    rows = read_csv(out / "results.csv")[1:]
    assert [r[0] for r in rows] == ["64", "128", "256"]
    assert all(float(r[1]) == 0.0 and float(r[2]) == 0.0 for r in rows)


def test_solve_schema(tmp_path):
    status, out = run(tmp_path, "solve")
    assert status == 0
    rows = read_csv(out / "results.csv")
    assert rows[0] == list(SCHEMAS["solve"])
    assert len(rows) == 1 + 17
    assert float(rows[-1][2]) == 1.0


def test_compare_example7_passes(tmp_path):
    status, out = run(tmp_path, "compare")
    assert status == 0
    assert read_csv(out / "results.csv")[0] == list(SCHEMAS["compare"])


def test_cross_noise_is_checked_failure(tmp_path):
    status, out = run(tmp_path, "cross")
    assert status == 2
    assert json.loads((out / "summary.json").read_text())["pass"] is False


def test_assumptions(tmp_path):
    status, out = run(tmp_path, "assumptions")
    assert status == 0
    rows = read_csv(out / "results.csv")[1:]
    assert {r[0] for r in rows} == {"H3.v_integral", "H3.u2_integral", "H2.max_violation"}
    assert all(r[1] == "problem" and r[3] == "true" for r in rows)


def test_json_output(tmp_path):
    raw = dict(CONFIGS["gronwall"], output={"format": "json"})
    status, out = run(tmp_path, "gronwall", raw=raw)
    assert status == 0
    data = json.loads((out / "results.json").read_text())
    assert data["columns"] == list(SCHEMAS["gronwall"])


@pytest.mark.parametrize(
    "raw",
    [
        {"experiment": "solve", "problem": "example7", "grid": {"steps": 0}},
        {"experiment": "solve", "problem": "example7", "grid": {"steps": 4}, "mystery": 1},
        {"experiment": "gronwall", "gronwall": {"A": 1, "M": 1, "r": "1/(1+t)"}},
    ],
)
def test_errors_exit_one(tmp_path, raw):
    status, _ = run(tmp_path, "gronwall", raw=raw)
    assert status == 1


def test_error_in_manifest(tmp_path):
    status, out = run(tmp_path, "gronwall", raw={"experiment": "gronwall", "gronwall": {"A": 1, "M": 1, "r": "1/(1+t)"}})
    manifest = json.loads((out / "manifest.json").read_text())
    assert status == 1 and "NonConvergent" in manifest["error"] and "bdsde_lab." in manifest["error"]


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"), "--quiet"]) == 1


@pytest.mark.parametrize("name", ["solve", "compare", "ito"])
def test_reruns_byte_identical(tmp_path, name):
    _, a = run(tmp_path, name)
    _, b = run(tmp_path, name)
    for f in ("results.csv", "summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_override(tmp_path):
    _, a = run(tmp_path, "solve")
    _, b = run(tmp_path, "solve", "--seed", "11")
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()
    assert json.loads((b / "manifest.json").read_text())["seed"] == 11


def test_module_entry_point(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(CONFIGS["gronwall"]))
    proc = subprocess.run(
        [sys.executable, "-m", "bdsde_lab.cli", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr


def test_gronwall_with_m(tmp_path):
    raw = {"experiment": "gronwall", "gronwall": {"A": 2, "M": 1, "r": "1/(1+t*t)", "m": "2"}}
    status, out = run(tmp_path, "gronwall", raw=raw)
    summary = json.loads((out / "summary.json").read_text())
    assert status == 0 and summary["hypothesis_holds"] and summary["conclusion_holds"]
