import csv
import json
from pathlib import Path

import numpy as np
import pytest

from tinysweep.cli import dispatch, main

GOLDEN = Path(__file__).parent / "golden"


def run(tmp_path, command, cfg=None, overrides=(), seed=None, env=None):
    path = None
    if cfg is not None:
        path = tmp_path / f"{command}.config.json"
        path.write_text(json.dumps(cfg))
    return dispatch(command, path, list(overrides), seed, 0, env or {})


def ucihar_csv(path, subjects=5, per=5, seed=0):
    """Nine-channel rows, one contiguous segment per (subject, class)."""
    rng = np.random.default_rng(seed)
    labels = ["WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING",
              "LAYING"]
    t = np.arange(64 * per + 64) / 50.0
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject"] + [f"ch{i}" for i in range(9)] + ["label"])
        for s in range(subjects):
            for k, lab in enumerate(labels):
                sig = np.sin(2 * np.pi * (0.5 + k) * t[:, None] + np.arange(9)) \
                    + 0.2 * rng.standard_normal((len(t), 9))
                for x in sig:
                    w.writerow([f"s{s}"] + [f"{v:.5f}" for v in x] + [lab])


def base_cfg(tmp_path, **extra):
    cfg = {"output_dir": str(tmp_path / "out"), "dataset_preset": "synthetic",
           "train": {"epochs": 3}}
    cfg.update(extra)
    return cfg


def test_help_matches_golden(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    assert capsys.readouterr().out == (GOLDEN / "help.txt").read_text()


def test_subcommand_help_lists_config_keys(capsys):
    with pytest.raises(SystemExit):
        main(["sweep", "--help"])
    out = capsys.readouterr().out
    assert "--overrides" in out and "sweep.reductions = [0, 25, 50, 75]" in out


@pytest.fixture(scope="module")
def ucihar_sweep(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ucihar")
    data = tmp / "ucihar.csv"
    ucihar_csv(data)
    before = data.read_bytes()
    cfg = {"output_dir": str(tmp / "out"), "dataset_preset": "ucihar",
           "input": {"path": str(data)}, "train": {"epochs": 3}}
    code = run(tmp, "sweep", cfg)
    return tmp, code, before, data


def test_ucihar_style_sweep(ucihar_sweep):
    tmp, code, before, data = ucihar_sweep
    assert code == 0
    out = tmp / "out"
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 5
    assert [l.split(",")[:4] for l in lines[1:]] == [
        ["0", "50", "128", "9"], ["25", "37.5", "96", "9"], ["50", "25", "64", "9"],
        ["75", "12.5", "32", "9"]]
    assert "failed" not in "".join(lines)
    macs = [float(l.split(",")[7]) for l in lines[1:]]
    assert macs[0] == 265.6 and macs == sorted(macs, reverse=True)
    assert data.read_bytes() == before
    log = json.loads((out / "report.csv.log.json").read_text())
    assert log["command"] == "sweep" and log["seeds"]["train"] == 7
    assert log["inputs"] == [str(data)]
    assert (out / "r75" / "model.tnyq.log.json").is_file()


def test_report_command_renders_sweep(ucihar_sweep, tmp_path):
    tmp, _, _, _ = ucihar_sweep
    dest = tmp_path / "r.md"
    cfg = {"report": {"inputs": [str(tmp / "out")]}, "paths": {"report": str(dest)}}
    assert run(tmp_path, "report", cfg) == 0
    md = dest.read_text()
    assert md.startswith("## ucihar\n")
    assert "| 0 | 50, (128 x 9) |" in md
    assert md.count("\n| ucihar |") == 1


def test_report_command_missing_input(tmp_path):
    cfg = {"report": {"inputs": [str(tmp_path / "nope")]}, "output_dir": str(tmp_path / "o")}
    assert run(tmp_path, "report", cfg) == 1
    assert not (tmp_path / "o").exists()


def test_step_by_step_pipeline(tmp_path):
    cfg = base_cfg(tmp_path, input={"format": "synthetic"},
                   reduce={"reduction_percent": 50})
    for cmd in ("ingest", "window", "reduce", "train", "compress", "profile"):
        assert run(tmp_path, cmd, cfg) == 0, cmd
    out = tmp_path / "out"
    for f in ("recording.csv", "windows.tswd", "reduced.tswd", "model.tnym", "model.tnyq",
              "footprint.csv"):
        assert (out / f).is_file() and (out / (f + ".log.json")).is_file()
    row = (out / "footprint.csv").read_text().splitlines()[1].split(",")
    assert row[:4] == ["50", "16", "32", "2"]
    assert 0.0 <= float(row[4]) <= 1.0


def test_profile_clock_override_echoed(tmp_path):
    res = {}
    for clock in (78e6, 39e6):
        d = tmp_path / str(int(clock))
        cfg = {"output_dir": str(d), "dataset_preset": "ucihar",
               "profile": {"source": "architecture"}}
        assert run(tmp_path, "profile", cfg, [f"device_profile.clock_hz={clock}"]) == 0
        doc = json.loads((d / "footprint.json").read_text())
        assert doc["device_profile"]["clock_hz"] == clock
        res[clock] = doc
    assert res[78e6]["macs_total"] == 265584
    assert res[39e6]["latency_ms"] == pytest.approx(2 * res[78e6]["latency_ms"], rel=1e-12)


def test_malformed_config_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 3,')
    assert dispatch("window", bad, [], None, 0, {}) == 1
    assert "ERROR config" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json"]


@pytest.mark.parametrize("override", ["train.epoch=3", "nosuch=1"])
def test_unknown_key_exits_1(tmp_path, override):
    assert run(tmp_path, "window", base_cfg(tmp_path), [override]) == 1
    assert not (tmp_path / "out").exists()


def test_unknown_config_file_key_exits_1(tmp_path):
    assert run(tmp_path, "window", {"sweep": {"reduction": [0]}}) == 1


def test_bad_reduction_exits_1(tmp_path):
    cfg = base_cfg(tmp_path, input={"format": "synthetic"})
    assert run(tmp_path, "window", cfg) == 0
    assert run(tmp_path, "reduce", cfg, ["reduce.reduction_percent=30"]) == 1


def test_single_subject_variant_becomes_failure_row(tmp_path):
    data = tmp_path / "one.csv"
    ucihar_csv(data, subjects=1, per=2)
    cfg = base_cfg(tmp_path, dataset_preset="ucihar", input={"path": str(data)},
                   sweep={"reductions": [0]})
    assert run(tmp_path, "sweep", cfg) == 0
    out = tmp_path / "out"
    assert (out / "report.csv").read_text().splitlines()[1].endswith(",failed")
    lock = json.loads((out / "manifest.lock.json").read_text())
    assert lock["failures"]["0"].startswith("single_subject:")


def _seeds(tmp_path, seed=None, env=None, sub="o"):
    cfg = {"output_dir": str(tmp_path / sub), "input": {"format": "synthetic"}, "seed": 3,
           "dataset_preset": "synthetic"}
    assert run(tmp_path, "window", cfg, seed=seed, env=env) == 0
    return json.loads((tmp_path / sub / "windows.tswd.log.json").read_text())["seeds"]


def test_seed_precedence(tmp_path):
    assert _seeds(tmp_path, sub="a")["global"] == 3
    s = _seeds(tmp_path, env={"TINYSWEEP_SEED": "11"}, sub="b")
    assert (s["global"], s["source"], s["split"]) == (11, "env", 11)
    s = _seeds(tmp_path, seed=5, env={"TINYSWEEP_SEED": "11"}, sub="c")
    assert (s["global"], s["source"]) == (5, "flag")


def test_bad_env_seed_exits_1(tmp_path):
    cfg = {"output_dir": str(tmp_path / "o"), "input": {"format": "synthetic"},
           "dataset_preset": "synthetic"}
    assert run(tmp_path, "window", cfg, env={"TINYSWEEP_SEED": "x"}) == 1


def test_window_idempotent(tmp_path):
    cfg = base_cfg(tmp_path, input={"format": "synthetic"})
    assert run(tmp_path, "window", cfg) == 0
    first = (tmp_path / "out" / "windows.tswd").read_bytes()
    assert run(tmp_path, "window", cfg) == 0
    assert (tmp_path / "out" / "windows.tswd").read_bytes() == first


def test_module_entry_point_exit_code(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "tinysweep.cli", "report", "--overrides",
                        "report.inputs=[]"], capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 1
    assert r.stderr.startswith("ERROR config")
