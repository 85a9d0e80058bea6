import json
import shutil
from pathlib import Path

import pytest

from ddfdie import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(argv, capsys):
    code = cli.main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_unknown_subcommand_is_usage_error(capsys):
    code, _, err = _run(["frobnicate"], capsys)
    assert code == 2 and "invalid choice" in err


def test_missing_config_is_domain_error(capsys, tmp_path):
    code, _, err = _run(["synth", "--out", str(tmp_path)], capsys)
    assert code == 1 and "--config" in err
    code, _, err = _run(["synth", "--config", str(tmp_path / "nope.toml")], capsys)
    assert code == 1 and "not found" in err


def test_infeasible_synthesis_exits_1(capsys, tmp_path):
    code, _, err = _run(["synth", "--config", str(CONFIGS / "infeasible.toml"), "--out", str(tmp_path)],
                        capsys)
    assert code == 1
    assert err.startswith("ddfdie synth: error:")
    assert "spectral radius" in err


@pytest.mark.parametrize("command", ["simulate", "identify", "synth", "detect", "isolate"])
def test_example1_commands(command, capsys, tmp_path):
    code, out, _ = _run([command, "--config", str(CONFIGS / "example1.toml"), "--out", str(tmp_path)], capsys)
    assert code == 0 and out.startswith(command + ":")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == command
    assert set(manifest) >= {"config_hash", "seeds", "versions", "files"}
    assert all((tmp_path / f).exists() for f in manifest["files"])


def test_isolation_verdict(capsys, tmp_path):
    code, out, _ = _run(["isolate", "--config", str(CONFIGS / "example1.toml"), "--out", str(tmp_path)],
                        capsys)
    assert code == 0 and "verdict 1" in out
    rec = json.loads((tmp_path / "verdicts.jsonl").read_text().splitlines()[0])
    assert rec["verdict"] == 1


@pytest.mark.parametrize("command", ["estimate", "tune"])
def test_example2_estimation_commands(command, capsys, tmp_path):
    code, out, _ = _run([command, "--config", str(CONFIGS / "example2.toml"), "--out", str(tmp_path)], capsys)
    assert code == 0
    errors = json.loads((tmp_path / "steady_errors.json").read_text())
    assert errors


def test_montecarlo_runs_override(capsys, tmp_path):
    code, out, _ = _run(["montecarlo", "--config", str(CONFIGS / "example2.toml"), "--out", str(tmp_path),
                         "--runs", "3"], capsys)
    assert code == 0 and "(3/3 runs)" in out
    code, _, err = _run(["montecarlo", "--config", str(CONFIGS / "example2.toml"), "--runs", "0"], capsys)
    assert code == 1 and "--runs" in err


def test_detection_needs_a_detection_filter(capsys, tmp_path):
    code, _, err = _run(["detect", "--config", str(CONFIGS / "example2.toml"), "--out", str(tmp_path)], capsys)
    assert code == 1 and "no detection filter" in err


def test_repro_example1(capsys, tmp_path):
    code, out, _ = _run(["repro", "example1_fdi", "--out", str(tmp_path)], capsys)
    assert code == 0 and "verdict=1" in out
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "summary.json").exists()


def test_reruns_byte_identical_and_inputs_untouched(capsys, tmp_path):
    cfg = tmp_path / "cfg.toml"
    shutil.copy(CONFIGS / "example2.toml", cfg)
    before = cfg.read_bytes()
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert cli.main(["tune", "--config", str(cfg), "--out", str(o), "--quiet"]) == 0
    assert cfg.read_bytes() == before
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    assert capsys.readouterr().out == ""
