import json
import subprocess
import sys
from pathlib import Path

import pytest

from mirrorctl.cli import main

ROOT = Path(__file__).resolve().parents[1]
LQR = ROOT / "configs" / "lqr.json"

STOCHASTIC = {
    "instance": {
        "objective": {"kind": "centered_quadratic", "lam": 1.0, "center": [1.0, -1.0]},
        "potential": {"kind": "quadratic"},
        "epsilon": 0.1,
        "horizon_T": 1.0,
    },
    "x0": [3.0, 0.0],
    "seed": 11,
    "checks": [
        {"name": "check_lemma1", "samples": 500},
        {"name": "check_hjb", "grid_points": 2, "time_points": 2, "controls_per_point": 5},
        {"name": "check_theorem4", "paths": 64, "step_h": 0.01, "mu": 1.0, "chunk_size": 16, "export_paths": 2},
        {"name": "check_theorem5_tracking", "paths": 10, "step_h": 0.01},
        {"name": "check_theorem2_strongly_convex", "times": [0.5, 1.0]},
    ],
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return p


def test_bundled_lqr_config(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(LQR), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    names = [c["check_name"] for c in report["checks"]]
    assert names == ["check_theorem1", "check_lemma1", "check_theorem2_convex", "check_theorem2_strongly_convex"]
    t1 = report["checks"][0]
    assert t1["passed"] and t1["margin"] >= 0
    for key in ("bound", "observed", "quantities", "config_echo"):
        assert key in t1
    assert (out / "traj_check_theorem1_0.csv").exists()
    assert (out / "traj_check_theorem1_2.csv").exists()
    assert "PASS check_theorem1" in capsys.readouterr().out


def test_mismatched_dimensions_exit_2(tmp_path, capsys):
    cfg = json.loads(LQR.read_text())
    cfg["x0"] = [1.0, 2.0, 3.0]
    assert main(["run", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "ConfigError" in err and "x0" in err
    assert not (tmp_path / "o" / "report.json").exists()


def test_unknown_field_rejected(tmp_path, capsys):
    cfg = json.loads(LQR.read_text())
    cfg["checks"][1]["sampels"] = 3
    assert main(["run", str(write(tmp_path, cfg))]) == 2
    assert "sampels" in capsys.readouterr().err


def test_json_syntax_error_has_position(tmp_path, capsys):
    p = write(tmp_path, '{\n  "x0": [1.0,\n}')
    assert main(["run", str(p)]) == 2
    assert "cfg.json:3:1" in capsys.readouterr().err


def test_unknown_kind_rejected(tmp_path, capsys):
    cfg = json.loads(LQR.read_text())
    cfg["instance"]["potential"] = {"kind": "entropy"}
    assert main(["run", str(write(tmp_path, cfg))]) == 2


def _run_twice(tmp_path, cfg, *flags):
    p = write(tmp_path, cfg)
    reports = []
    for k, extra in enumerate([(), flags]):
        out = tmp_path / f"run{k}"
        main(["run", str(p), "--out", str(out), *extra])
        reports.append((out / "report.json").read_bytes())
    return reports


def test_report_byte_identical(tmp_path):
    a, b = _run_twice(tmp_path, STOCHASTIC)
    assert a == b


def test_report_byte_identical_under_parallel(tmp_path):
    a, b = _run_twice(tmp_path, STOCHASTIC, "--parallel")
    assert a == b
    csv = sorted(p.name for p in (tmp_path / "run1").glob("*.csv"))
    assert csv == sorted(p.name for p in (tmp_path / "run0").glob("*.csv"))
    for name in csv:
        assert (tmp_path / "run0" / name).read_bytes() == (tmp_path / "run1" / name).read_bytes()


def test_seed_env_override(tmp_path, monkeypatch):
    p = write(tmp_path, STOCHASTIC)
    main(["run", str(p), "--out", str(tmp_path / "a")])
    monkeypatch.setenv("MIRRORCTL_SEED", "11")
    main(["run", str(p), "--out", str(tmp_path / "b")])
    monkeypatch.setenv("MIRRORCTL_SEED", "12")
    main(["run", str(p), "--out", str(tmp_path / "c")])
    read = lambda d: (tmp_path / d / "report.json").read_bytes()
    assert read("a") == read("b")
    assert read("a") != read("c")
    echo = json.loads(read("c"))["checks"][0]["config_echo"]
    assert echo["seed"] == 12


def test_bad_seed_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MIRRORCTL_SEED", "abc")
    assert main(["run", str(LQR), "--out", str(tmp_path)]) == 2


def test_failed_checks_recorded_not_raised(tmp_path, capsys):
    cfg = json.loads(LQR.read_text())
    cfg["checks"] = [
        # HJB needs epsilon > 0: a numeric-precondition failure
        {"name": "check_hjb"},
        # overstated modulus: bound violated, negative margin reported
        {"name": "check_theorem2_strongly_convex", "mu": 50.0, "times": [1.0]},
        {"name": "check_lemma1", "samples": 100},
    ]
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) == 1
    checks = json.loads((out / "report.json").read_text())["checks"]
    assert [c["passed"] for c in checks] == [False, False, True]
    assert "error" in checks[0] and checks[0]["margin"] is None
    assert checks[1]["margin"] < 0 and "error" not in checks[1]
    assert "FAIL check_hjb" in capsys.readouterr().out


def test_duplicate_checks_get_distinct_csv_stems(tmp_path):
    cfg = json.loads(LQR.read_text())
    cfg["checks"] = [{"name": "check_theorem2_convex", "times": [1]}] * 2
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) == 0
    assert (out / "traj_check_theorem2_convex1_0.csv").exists()
    assert (out / "traj_check_theorem2_convex2_0.csv").exists()


def test_export_disabled(tmp_path):
    cfg = json.loads(LQR.read_text())
    cfg["export_trajectories"] = False
    out = tmp_path / "o"
    main(["run", str(write(tmp_path, cfg)), "--out", str(out)])
    assert not list(out.glob("*.csv"))


def test_catalog_text(capsys):
    assert main(["catalog"]) == 0
    text = capsys.readouterr().out
    for word in ("quadratic", "hypentropy", "reg_hypentropy", "check_hjb", "check_theorem5_tracking"):
        assert word in text
    assert "samples: integer (default 10000)" in text


def test_catalog_json(capsys):
    assert main(["catalog", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert "check_hjb" in data["checks"]
    assert "hypentropy" in data["potentials"]
    assert data["config_schema"]["additionalProperties"] is False


def test_unknown_subcommand_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mirrorctl", "catalog"], capture_output=True, text=True, cwd=tmp_path
    )
    assert proc.returncode == 0
    assert "check_hjb" in proc.stdout
