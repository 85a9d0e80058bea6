"""Run configuration: a TOML file describing model, data, filters, faults and evaluation.

Grammar (all tables optional except ``[model]``)::

    out = "results"                 # output directory (CLI --out overrides)

    [model]
    name = "example2"               # example1 | example2 | vtol
    # or inline matrices:  A = [[...]], B = [[...]], C = [[...]]
    # or continuous time:  Ac = [[...]], Bc = [[...]], C = [[...]], dt = 0.5
    noise = 0.1                     # Q = R = noise * I (inline/continuous only)
    feedback = [[...]]              # optional output feedback u = -K y + ref
    printed = false                 # example2 only: use the matrix exactly as printed

    [identification]
    T = 1000                        # PRBS samples (ignored when segments are given)
    amplitude = 1.0
    seed = 0
    L = 0                           # FIR order, 0 = automatic
    segments = [{kind = "prbs", T = 700, level = 5.0}, {kind = "operating", T = 300}]

    [[filters]]
    i = 2
    kind = "sensor_estimation"      # detection | actuator_isolation | sensor_isolation
                                    # | sensor_estimation | actuator_estimation
    p = [2]                         # 1-based channel sets
    q = []
    poles = [0.3]
    exact = false                   # oracle synthesis from the true model

    [faults]
    actuator = [{type = "step", onset = 150, severity = 1.0}, {type = "none"}]
    sensor = [{type = "sinusoid", onset = 51, amplitude = 1.0, omega = 0.314}]

    [test]
    T = 400
    input = "prbs"                  # prbs | operating | constant
    level = 1.0
    seed = 1

    [tuning]
    ratio = 0.7
    lambda_tol = 1e-6
    settle = 0
    instrumented = true

    [evaluation]
    n_runs = 100
    quantiles = [0.005, 0.995]
    window = 20
    calibration_runs = 100
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import sim, systems, synth
from .structmat import IndexSelection

EXAMPLE1_POLES = (0.26, 0.44)


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and the violated constraint."""


def _need(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _matrix(d, key, where):
    try:
        M = np.array(d[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: must be a numeric matrix") from None
    if M.ndim == 1:
        M = M[None, :]
    _need(M.ndim == 2, f"{where}.{key}", "must be two-dimensional")
    return M


# ---------------------------------------------------------------- sections

@dataclass
class ModelConfig:
    name: str | None = None
    A: list | None = None
    B: list | None = None
    C: list | None = None
    Ac: list | None = None
    Bc: list | None = None
    dt: float | None = None
    noise: float = systems.EXAMPLE_NOISE
    feedback: list | None = None
    printed: bool = False

    def plant(self) -> sim.StateSpaceModel:
        """The plant before any feedback is applied."""
        if self.name == "example1":
            return systems.nonminimum_phase()
        if self.name == "example2":
            return systems.minimum_phase(printed=self.printed)
        if self.name == "vtol":
            return systems.vtol_open_loop()
        C = np.asarray(self.C, dtype=float)
        if self.Ac is not None:
            A, B = sim.zoh_discretize(self.Ac, self.Bc, self.dt)
        else:
            A, B = np.asarray(self.A, dtype=float), np.asarray(self.B, dtype=float)
        n, l = A.shape[0], C.shape[0]
        return sim.StateSpaceModel(A, B, C, self.noise * np.eye(n), self.noise * np.eye(l))

    def gain(self) -> np.ndarray | None:
        if self.name == "vtol":
            return systems.VTOL_KY
        return None if self.feedback is None else np.asarray(self.feedback, dtype=float)

    def model(self) -> sim.StateSpaceModel:
        """What the filters see: the plant, or the reference-to-output loop under feedback."""
        K = self.gain()
        return self.plant() if K is None else sim.closed_loop_model(self.plant(), K)

    def simulate(self, U, faults=None, noise: bool = True, seed=None) -> sim.IoDataset:
        K = self.gain()
        if K is None:
            return sim.simulate(self.plant(), U, faults, noise_on=noise, seed=seed)[0]
        return sim.closed_loop_sim(self.plant(), K, U, faults, noise_on=noise, seed=seed)


@dataclass
class SegmentConfig:
    kind: str = "prbs"
    T: int = 1000
    level: float = 1.0


@dataclass
class IdentConfig:
    T: int = 1000
    amplitude: float = 1.0
    seed: int = 0
    L: int = 0
    segments: list = field(default_factory=list)

    def input_segments(self):
        from .evaluation import InputSegment

        if self.segments:
            return tuple(InputSegment(s.kind, s.T, s.level) for s in self.segments)
        return (InputSegment("prbs", self.T, self.amplitude),)


@dataclass
class FilterConfig:
    i: int = 2
    kind: str = "detection"
    p: list = field(default_factory=list)
    q: list = field(default_factory=list)
    poles: list | None = None
    exact: bool = False
    name: str = ""
    spec: synth.FilterSpec | None = None


@dataclass
class TestConfig:
    T: int = 400
    input: str = "prbs"
    level: float = 1.0
    seed: int = 1


@dataclass
class TuningConfig:
    ratio: float = 0.7
    lambda_tol: float = 1e-6
    settle: int = 0
    instrumented: bool = True


@dataclass
class EvalConfig:
    n_runs: int = 100
    quantiles: tuple = (0.005, 0.995)
    window: int = 20
    calibration_runs: int = 100


@dataclass
class RunConfig:
    model: ModelConfig
    identification: IdentConfig
    filters: list
    faults: sim.FaultScenario
    test: TestConfig
    tuning: TuningConfig
    evaluation: EvalConfig
    out: str = "results"
    source: str = ""
    digest: str = ""

    def to_dict(self) -> dict:
        d = {
            "model": asdict(self.model),
            "identification": asdict(self.identification),
            "filters": [{k: v for k, v in asdict(f).items() if k != "spec"} for f in self.filters],
            "faults": self.faults.to_dict(),
            "test": asdict(self.test),
            "tuning": asdict(self.tuning),
            "evaluation": {**asdict(self.evaluation), "quantiles": list(self.evaluation.quantiles)},
            "out": self.out,
        }
        return d


# ---------------------------------------------------------------- loading

_SECTIONS = {"model", "identification", "filters", "faults", "test", "tuning", "evaluation", "out"}


def _fill(cls, raw: dict, where: str):
    known = {f for f in cls.__dataclass_fields__ if f != "spec"}
    extra = set(raw) - known
    _need(not extra, where, f"unknown keys {sorted(extra)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _channels(values, n, where, what):
    _need(isinstance(values, list), where, "must be a list of 1-based channel numbers")
    for v in values:
        _need(isinstance(v, int) and 1 <= v <= n, where,
              f"channel {v!r} outside 1..{n} ({what} of the model)")
    _need(len(set(values)) == len(values), where, "channels must not repeat")
    return values


def _validate_model(raw: dict) -> ModelConfig:
    mc = _fill(ModelConfig, raw, "model")
    if mc.name is not None:
        _need(mc.name in systems.PAPER_SYSTEMS, "model.name",
              f"must be one of {sorted(systems.PAPER_SYSTEMS)}, got {mc.name!r}")
        return mc
    if mc.Ac is not None:
        _need(mc.Bc is not None and mc.C is not None, "model", "continuous models need Ac, Bc and C")
        _need(mc.dt is not None and mc.dt > 0, "model.dt", "must be a positive sampling time")
        Ac, Bc = _matrix(raw, "Ac", "model"), _matrix(raw, "Bc", "model")
        _need(Ac.shape[0] == Ac.shape[1] == Bc.shape[0], "model.Bc", "rows must match Ac")
    else:
        _need(mc.A is not None and mc.B is not None and mc.C is not None, "model",
              "give name, inline A/B/C, or continuous Ac/Bc/C/dt")
        A, B = _matrix(raw, "A", "model"), _matrix(raw, "B", "model")
        _need(A.shape[0] == A.shape[1], "model.A", "must be square")
        _need(B.shape[0] == A.shape[0], "model.B", "rows must match A")
    C = _matrix(raw, "C", "model")
    n = len(raw.get("A") or raw.get("Ac"))
    _need(C.shape[1] == n, "model.C", f"must have {n} columns")
    _need(mc.noise >= 0, "model.noise", "must be non-negative")
    try:
        mc.plant()
    except sim.ModelError as exc:
        raise ConfigError(f"model: {exc}") from None
    return mc


def _validate_filter(raw: dict, idx: int, model, mc: ModelConfig) -> FilterConfig:
    where = f"filters[{idx}]"
    fc = _fill(FilterConfig, raw, where)
    _need(isinstance(fc.i, int) and fc.i >= 1, f"{where}.i", "must be an integer >= 1")
    _channels(fc.p, model.l, f"{where}.p", "outputs")
    _channels(fc.q, model.m, f"{where}.q", "inputs")
    if fc.poles is None and mc.name == "example1":
        fc.poles = list(EXAMPLE1_POLES)
    try:
        sel = IndexSelection(p=fc.p, q=fc.q, l=model.l, m=model.m)
        fc.spec = synth.FilterSpec(fc.i, sel, fc.kind,
                                   None if fc.poles is None else tuple(fc.poles), fc.name)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return fc


def _validate_faults(raw: dict, model) -> sim.FaultScenario:
    _need(set(raw) <= {"actuator", "sensor"}, "faults", "only 'actuator' and 'sensor' lists are allowed")
    try:
        sc = sim.FaultScenario.from_dict(raw)
        sc.signals(1, model.m, model.l)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"faults: {exc}") from None
    return sc


def parse_config(raw: dict, source: str = "") -> RunConfig:
    """Validate a parsed TOML document and fill in defaults."""
    extra = set(raw) - _SECTIONS
    _need(not extra, "config", f"unknown sections {sorted(extra)}")
    _need("model" in raw, "model", "section is required")
    mc = _validate_model(dict(raw["model"]))
    model = mc.model()

    ir = dict(raw.get("identification", {}))
    segs = [_fill(SegmentConfig, dict(s), f"identification.segments[{c}]")
            for c, s in enumerate(ir.pop("segments", []))]
    ic = _fill(IdentConfig, ir, "identification")
    ic.segments = segs
    _need(ic.T > 1, "identification.T", "must exceed 1")
    _need(ic.L >= 0, "identification.L", "must be >= 0 (0 = automatic)")
    for c, s in enumerate(segs):
        _need(s.kind in ("prbs", "operating", "constant"), f"identification.segments[{c}].kind",
              "must be prbs, operating or constant")
        _need(s.T >= 1, f"identification.segments[{c}].T", "must be >= 1")

    fraw = raw.get("filters", [{"i": 2, "kind": "detection"}])
    _need(isinstance(fraw, list) and fraw, "filters", "must be a non-empty array of tables")
    filters = [_validate_filter(dict(f), c, model, mc) for c, f in enumerate(fraw)]

    faults = _validate_faults(dict(raw.get("faults", {})), model)
    tc = _fill(TestConfig, dict(raw.get("test", {})), "test")
    _need(tc.input in ("prbs", "operating", "constant"), "test.input", "must be prbs, operating or constant")
    _need(tc.T > max(f.i for f in filters), "test.T", "must exceed every filter order")
    tu = _fill(TuningConfig, dict(raw.get("tuning", {})), "tuning")
    _need(0.0 < tu.ratio < 1.0, "tuning.ratio", "must lie in (0, 1)")
    _need(tu.lambda_tol > 0, "tuning.lambda_tol", "must be positive")
    _need(tu.settle >= 0, "tuning.settle", "must be >= 0")
    ec = _fill(EvalConfig, dict(raw.get("evaluation", {})), "evaluation")
    ec.quantiles = tuple(float(v) for v in ec.quantiles)
    _need(len(ec.quantiles) == 2 and 0.0 <= ec.quantiles[0] < ec.quantiles[1] <= 1.0,
          "evaluation.quantiles", "must be a pair 0 <= lo < hi <= 1")
    _need(ec.n_runs >= 1, "evaluation.n_runs", "must be >= 1")
    _need(ec.calibration_runs >= 10, "evaluation.calibration_runs",
          "must be >= 10 (fewer healthy runs give meaningless thresholds)")
    _need(ec.window >= 1, "evaluation.window", "must be >= 1")

    cfg = RunConfig(mc, ic, filters, faults, tc, tu, ec, str(raw.get("out", "results")), source)
    cfg.digest = config_hash(cfg)
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a TOML run configuration."""
    p = Path(path)
    try:
        raw = tomllib.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file {p} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: {p} does not parse: {exc}") from None
    return parse_config(raw, str(p))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the resolved configuration."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()
