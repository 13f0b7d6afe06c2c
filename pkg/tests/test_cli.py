"""End-to-end runs of the command line tool, all in-process."""

import csv
import hashlib
import json
import shutil
from importlib import resources
from pathlib import Path

import pytest

from cyclobot.cli import DEFAULT_SEED, main


def _run(argv, out_dir):
    return main([*argv, "--out-dir", str(out_dir)])


def _read_csv(path):
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def _dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["--version"])
    assert ex.value.code == 0
    assert capsys.readouterr().out.strip()


def test_bad_usage_exits_one(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["dyno"])
    assert ex.value.code == 1
    with pytest.raises(SystemExit) as ex:
        main(["frobnicate"])
    assert ex.value.code == 1


def test_unknown_preset_exits_one(tmp_path, capsys):
    assert _run(["dyno", "backlash", "--actuator", "warp9"], tmp_path) == 1
    assert "error:" in capsys.readouterr().err


def test_backlash_writes_manifest(tmp_path, capsys):
    assert _run(["dyno", "backlash"], tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "dyno backlash"
    assert manifest["seed"] == DEFAULT_SEED
    assert manifest["config"]["probe_torque"] == 0.2
    names = [o["file"] for o in manifest["outputs"]]
    assert names == sorted(names)
    for entry in manifest["outputs"]:
        digest = hashlib.sha256(
            (tmp_path / entry["file"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]
    header, rows = _read_csv(tmp_path / "backlash.csv")
    assert header == ["backlash", "travel", "probe_torque"]
    assert float(rows[0][0]) == pytest.approx(0.0187, abs=2e-4)
    # Every produced path is echoed for scripting.
    out_lines = capsys.readouterr().out.strip().splitlines()
    assert str(tmp_path / "manifest.json") in out_lines


def test_reruns_are_byte_identical(tmp_path, capsys):
    cases = [
        ["dyno", "backlash"],
        ["bus", "analyze"],
        ["bench", "compare"],
    ]
    for argv in cases:
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run(argv, a) == 0
        assert _run(argv, b) == 0
        assert _dir_bytes(a) == _dir_bytes(b)
        shutil.rmtree(a)
        shutil.rmtree(b)


def test_bus_analyze_report(tmp_path, capsys):
    assert _run(["bus", "analyze"], tmp_path) == 0
    header, rows = _read_csv(tmp_path / "bus_frames.csv")
    assert header == ["dlc", "base_bits", "worst_case_bits"]
    assert [int(v) for v in rows[0]] == [0, 47, 55]
    assert [int(v) for v in rows[-1]] == [8, 111, 135]
    report = (tmp_path / "bus_report.txt").read_text()
    assert "0.405" in report
    assert "feasible" in report


def test_bus_analyze_infeasible_is_reported_not_fatal(tmp_path, capsys):
    assert _run(["bus", "analyze", "--devices", "64"], tmp_path) == 0
    assert "INFEASIBLE" in (tmp_path / "bus_report.txt").read_text()


def test_bench_compare_ranking(tmp_path, capsys):
    assert _run(["bench", "compare"], tmp_path) == 0
    header, rows = _read_csv(tmp_path / "comparison.csv")
    assert header[:4] == ["rank", "name", "performance_factor",
                          "performance_per_dollar"]
    assert [int(r[0]) for r in rows] == list(range(1, len(rows) + 1))
    phis = [float(r[3]) for r in rows]
    assert phis == sorted(phis, reverse=True)


def test_ctrl_run_short(tmp_path, capsys):
    assert _run(["ctrl", "run", "--duration", "0.2"], tmp_path) == 0
    header, rows = _read_csv(tmp_path / "loop_summary.csv")
    summary = dict(zip(header, rows[0]))
    assert int(summary["n_low_ticks"]) == 50
    assert int(summary["n_policy_ticks"]) == 5
    assert len(summary["layout_checksum"]) == 64
    assert float(summary["max_bus_utilization"]) < 1.0
    log_header, log_rows = _read_csv(tmp_path / "loop_log.csv")
    assert len(log_rows) == 50
    assert log_header[0] == "t"


def test_teleop_replay_shipped_stream(tmp_path, capsys):
    assert _run(["teleop", "replay"], tmp_path) == 0
    header, rows = _read_csv(tmp_path / "replay_summary.csv")
    summary = dict(zip(header, rows[0]))
    assert int(summary["ticks"]) == 1551
    assert int(summary["engages"]) == 2
    assert float(summary["max_engage_jump"]) == 0.0
    traj_header, traj_rows = _read_csv(tmp_path / "trajectory.csv")
    assert len(traj_rows) == 1551
    assert traj_header[:3] == ["t", "clutch", "gripper"]


def test_teleop_modes_share_outputs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(["teleop", "replay", "--mode", "headless"], a) == 0
    assert _run(["teleop", "replay", "--mode", "vr"], b) == 0
    assert (a / "trajectory.csv").read_bytes() \
        == (b / "trajectory.csv").read_bytes()


def test_validate_packaged_configs(capsys):
    root = Path(str(resources.files("cyclobot").joinpath("configs")))
    files = sorted(str(p) for p in root.rglob("*")
                   if p.suffix in (".json", ".csv"))
    assert len(files) >= 10
    assert main(["validate", *files]) == 0
    out = capsys.readouterr().out
    assert out.count("ok   ") == len(files)


def test_validate_rejects_bad_files(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "kind": "mystery"}))
    assert main(["validate", str(bad)]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "missing.json")]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    cfg = json.loads(Path(str(resources.files("cyclobot").joinpath(
        "configs/actuators/6512.json"))).read_text())
    cfg["torque_limit"] = 2.0
    weak = tmp_path / "weak.json"
    weak.write_text(json.dumps(cfg))
    code = _run(["dyno", "durability", "--actuator", str(weak),
                 "--hours", "1"], tmp_path / "out")
    assert code == 2
    assert "runtime error:" in capsys.readouterr().err


def test_out_dir_env_fallback(tmp_path, capsys, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("CYCLOBOT_OUT_DIR", str(target))
    assert main(["dyno", "backlash"]) == 0
    assert (target / "backlash.csv").is_file()
    assert (target / "manifest.json").is_file()
