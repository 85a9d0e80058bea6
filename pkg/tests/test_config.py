from pathlib import Path

import pytest

from ddfdie.config import ConfigError, config_hash, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _minimal(**extra):
    raw = {"model": {"name": "example2"}, "filters": [{"i": 2, "kind": "sensor_estimation", "p": [2]}]}
    raw.update(extra)
    return raw


def test_minimal_defaults():
    cfg = parse_config(_minimal())
    assert cfg.tuning.ratio == 0.7
    assert set(cfg.filters[0].spec.pole_vector().tolist()) == {0.3}
    assert cfg.evaluation.quantiles == (0.005, 0.995)


def test_shipped_configs_load():
    for p in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(p)
        assert cfg.digest == config_hash(cfg)
    cfg = load_config(CONFIGS / "example1.toml")
    assert tuple(cfg.filters[0].poles) == (0.26, 0.44)


def test_channel_range_message():
    raw = _minimal(filters=[{"i": 2, "kind": "sensor_estimation", "p": [9]}])
    with pytest.raises(ConfigError, match="channel 9 outside 1..2"):
        parse_config(raw)


@pytest.mark.parametrize("raw,where", [
    ({"model": {"name": "example2"}, "extra": {}}, "unknown sections"),
    (_minimal(tuning={"ratio": 0.7, "foo": 1}), "unknown keys"),
    (_minimal(tuning={"ratio": 1.2}), "tuning.ratio"),
    (_minimal(evaluation={"calibration_runs": 5}), "calibration_runs"),
    (_minimal(evaluation={"quantiles": [0.9, 0.1]}), "quantiles"),
    ({"filters": []}, "model"),
    ({"model": {"name": "nope"}}, "model.name"),
    ({"model": {"A": [[0.5]], "B": [[1.0]], "C": [[1.0, 2.0]]}}, "model.C"),
    (_minimal(test={"T": 1}), "test.T"),
    (_minimal(faults={"actuator": [{"type": "ramp"}]}), "faults"),
])
def test_rejections(raw, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(raw)


def test_inline_and_continuous_models():
    cfg = parse_config({"model": {"A": [[0.5, 0.0], [0.1, 0.3]], "B": [[1.0], [0.0]],
                                  "C": [[1.0, 0.0]], "noise": 0.1}})
    assert cfg.model.model().n == 2
    cfg = parse_config({"model": {"Ac": [[-1.0]], "Bc": [[1.0]], "C": [[1.0]], "dt": 0.1}})
    assert 0 < cfg.model.model().A[0, 0] < 1


def test_hash_stable_and_sensitive():
    a, b = parse_config(_minimal()), parse_config(_minimal())
    assert a.digest == b.digest
    c = parse_config(_minimal(tuning={"ratio": 0.6}))
    assert c.digest != a.digest


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\n")
    with pytest.raises(ConfigError, match="does not parse"):
        load_config(bad)
