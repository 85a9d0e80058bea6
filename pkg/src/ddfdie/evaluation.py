"""Monte Carlo harness, timing probe and scripted reproduction of the three examples.

An :class:`EstimationScenario` describes one end-to-end estimation experiment:
a plant, the input record used for identification and tuning, the filter to
build, and a faulty test run. :func:`monte_carlo` repeats it with fresh noise
and fresh identification data per run and aggregates the steady estimation
errors. :func:`scenario_repro` writes CSV/SVG/JSON bundles for the three
examples.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ident, runtime, sim, synth, systems, tuning
from .structmat import IndexSelection

EXCLUDABLE = (
    synth.InfeasibleFilterError,
    ident.RankDeficiencyError,
    ident.PersistentExcitationError,
    tuning.TuningError,
    np.linalg.LinAlgError,
)
VARIANTS = ("exact", "untuned", "tuned")
STEADY_WINDOW = 100


# ---------------------------------------------------------------- inputs

def operating_input(T: int, scale: float = 1.0) -> np.ndarray:
    """The large-amplitude two-channel test input ``[20 + 20 sin 5k; 30 + 30 cos 7k]``."""
    k = np.arange(T)
    return scale * np.vstack([20.0 + 20.0 * np.sin(5.0 * k), 30.0 + 30.0 * np.cos(7.0 * k)])


@dataclass(frozen=True)
class InputSegment:
    """One piece of an input record.

    ``kind`` is ``"prbs"`` (``level`` is the amplitude), ``"operating"``
    (``level`` scales :func:`operating_input`) or ``"constant"`` (every
    channel held at ``level``).
    """

    kind: str
    T: int
    level: float = 1.0

    def __post_init__(self):
        if self.kind not in ("prbs", "operating", "constant"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.T < 1:
            raise ValueError("input segments need at least one sample")

    def build(self, m: int, seed: int | None = None) -> np.ndarray:
        if self.kind == "prbs":
            return sim.prbs(self.T, m, self.level, seed=seed)
        if self.kind == "operating":
            if m != 2:
                raise ValueError("the operating input is defined for two channels")
            return operating_input(self.T, self.level)
        return np.full((m, self.T), float(self.level))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T, "level": self.level}


def build_record(segments, m: int, seed: int | None) -> np.ndarray:
    return np.hstack([s.build(m, None if seed is None else seed + c) for c, s in enumerate(segments)])


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class EstimationScenario:
    """Everything one Monte Carlo run needs.

    The identification record is split at ``ratio``: the prefix identifies the
    Markov parameters and ``M``, the suffix tunes the filter (its first
    ``settle`` outputs are left out of the fit).
    """

    scenario_id: str
    system: str
    spec: synth.FilterSpec
    ident_input: tuple
    test_input: InputSegment
    faults: sim.FaultScenario
    ratio: float = tuning.DEFAULT_RATIO
    settle: int = 0
    instrumented: bool = True
    noise: bool = True
    variants: tuple = ("untuned", "tuned")
    n_last: int = STEADY_WINDOW

    def __post_init__(self):
        if self.spec.kind not in tuning.ESTIMATION_KINDS:
            raise ValueError("Monte Carlo scenarios need an estimation filter")
        bad = set(self.variants) - set(VARIANTS)
        if bad or not self.variants:
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")
        if self.faults.onset() is None:
            raise ValueError("the test run needs a fault to estimate")

    @property
    def channels(self) -> tuple:
        """1-based fault channels whose estimates are scored."""
        sel = self.spec.sel
        return tuple(sel.p if self.spec.kind == "sensor_estimation" else sel.q)

    @property
    def onset(self) -> int:
        return self.faults.onset()

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "system": self.system,
            "filter": self.spec.to_dict(),
            "ident_input": [s.to_dict() for s in self.ident_input],
            "test_input": self.test_input.to_dict(),
            "faults": self.faults.to_dict(),
            "ratio": self.ratio,
            "settle": self.settle,
            "instrumented": self.instrumented,
            "noise": self.noise,
            "variants": list(self.variants),
            "n_last": self.n_last,
        }


def true_model(name: str, noise: bool = True) -> sim.StateSpaceModel:
    """Plant as seen by the filters (reference-to-output for the VTOL loop)."""
    m = systems.get_system(name)
    return m if noise else m.with_noise(np.zeros_like(m.Q), np.zeros_like(m.R), np.zeros_like(m.S))


def simulate_system(name: str, U, faults=None, noise: bool = True, seed=None) -> sim.IoDataset:
    """Simulate one of the example plants; the VTOL runs under its output feedback."""
    if name == "vtol":
        return sim.closed_loop_sim(systems.vtol_open_loop(), systems.VTOL_KY, U, faults,
                                   noise_on=noise, seed=seed)
    d, _ = sim.simulate(systems.get_system(name), U, faults, noise_on=noise, seed=seed)
    return d


def _two_channel_steps(kind: str, a: float, b: float, onset: int = 150) -> sim.FaultScenario:
    steps = (sim.Step(onset, a), sim.Step(onset, b))
    return sim.FaultScenario(sensor=steps) if kind == "sensor" else sim.FaultScenario(actuator=steps)


# PRBS amplitude of the identification record for the minimum-phase plant; the
# estimated M at this level agrees with the published filter matrices
EX2_AMPLITUDE = 3.5


def example2_scenario(amplitude: float = EX2_AMPLITUDE) -> EstimationScenario:
    """Sensor-2 bias of 2 at k=150 under the operating input; i=2, p={2}."""
    spec = synth.FilterSpec(2, IndexSelection(p=[2], l=2, m=2), "sensor_estimation")
    return EstimationScenario(
        "example2_sensor2",
        "example2",
        spec,
        (InputSegment("prbs", 700, amplitude), InputSegment("operating", 300)),
        InputSegment("operating", 400),
        sim.FaultScenario(sensor=(None, sim.Step(150, 2.0))),
    )


def sweep_scenario(kind: str, input_name: str = "u1", amplitude: float = EX2_AMPLITUDE) -> EstimationScenario:
    """Both sensors (or both actuators) faulted with (-1, 1) at k=150; i=2."""
    scale = {"u1": 1.0, "u2": 0.1}[input_name]
    if kind == "sensor":
        spec = synth.FilterSpec(2, IndexSelection(p=[1, 2], l=2, m=2), "sensor_estimation")
    elif kind == "actuator":
        spec = synth.FilterSpec(2, IndexSelection(q=[1, 2], l=2, m=2), "actuator_estimation")
    else:
        raise ValueError("kind must be 'sensor' or 'actuator'")
    return EstimationScenario(
        f"sweep_{kind}_{input_name}",
        "example2",
        spec,
        (InputSegment("prbs", 700, amplitude), InputSegment("operating", 300, scale)),
        InputSegment("operating", 400, scale),
        _two_channel_steps(kind, -1.0, 1.0),
    )


VTOL_REFERENCE = 15.0
VTOL_ONSET = 51


def vtol_faults(kind: str) -> sim.FaultScenario:
    """``[sin(0.1 pi k); 1]`` on channels 1 and 2 for ``k > 50``."""
    w = (sim.Sinusoid(VTOL_ONSET, 1.0, 0.1 * np.pi), sim.Step(VTOL_ONSET, 1.0))
    return sim.FaultScenario(sensor=w) if kind == "sensor" else sim.FaultScenario(actuator=w)


def vtol_scenario(kind: str, amplitude: float = 5.0) -> EstimationScenario:
    """VTOL under feedback at reference 15; sensor filter i=2/p={1,2}, actuator i=3/q={1,2}."""
    if kind == "sensor":
        spec = synth.FilterSpec(2, IndexSelection(p=[1, 2], l=4, m=2), "sensor_estimation")
    elif kind == "actuator":
        spec = synth.FilterSpec(3, IndexSelection(q=[1, 2], l=4, m=2), "actuator_estimation")
    else:
        raise ValueError("kind must be 'sensor' or 'actuator'")
    # the tuning segment is the evaluation operating point; the loop needs
    # ~150 samples to settle after the step from the PRBS record. With a
    # constant reference the input lags only span the mean, so the sensor
    # filter (whose error follows the slow drift of y1) is fitted by plain
    # least squares; the drift is process-noise driven and dwarfs the
    # measurement noise that biases that fit.
    return EstimationScenario(
        f"vtol_{kind}",
        "vtol",
        spec,
        (InputSegment("prbs", 1000, amplitude), InputSegment("constant", 600, VTOL_REFERENCE)),
        InputSegment("constant", 400, VTOL_REFERENCE),
        vtol_faults(kind),
        ratio=1000 / 1600,
        settle=150,
        instrumented=kind == "actuator",
    )


# ---------------------------------------------------------------- single run

def run_seeds(seed: int) -> dict:
    """Independent sub-seeds of one run (identification input/noise, test noise)."""
    s = np.random.SeedSequence(int(seed)).generate_state(3)
    return {"input": int(s[0]), "ident_noise": int(s[1]), "test_noise": int(s[2])}


@dataclass
class RunArtifacts:
    """Filters and data of one scenario run (used by the reproduction bundles)."""

    filters: dict
    ident_data: sim.IoDataset
    test_data: sim.IoDataset
    truth: np.ndarray
    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def identification_record(sc: EstimationScenario, seed: int) -> sim.IoDataset:
    seeds = run_seeds(seed)
    m = systems.get_system(sc.system).m
    U = build_record(sc.ident_input, m, seeds["input"])
    return simulate_system(sc.system, U, None, sc.noise, seeds["ident_noise"])


def build_filters(sc: EstimationScenario, data: sim.IoDataset) -> dict:
    """Synthesize (and tune) the filters named in ``sc.variants`` from one record."""
    out = {}
    if "exact" in sc.variants:
        out["exact"] = synth.synthesize_exact(true_model(sc.system), sc.spec)
    if "untuned" in sc.variants or "tuned" in sc.variants:
        first, second = tuning.split_data(data, sc.ratio)
        markov, M = ident.identify(first, sc.spec.i, sc.spec.design_sel)
        f = synth.synthesize_data_driven(markov, M, sc.spec)
        if "untuned" in sc.variants:
            out["untuned"] = f
        if "tuned" in sc.variants:
            out["tuned"] = tuning.tune(f, second, settle=sc.settle,
                                        instrumented=sc.instrumented)
    return out


def evaluate_filters(sc: EstimationScenario, filters: dict, seed: int) -> RunArtifacts:
    seeds = run_seeds(seed)
    m = systems.get_system(sc.system).m
    l = systems.get_system(sc.system).l
    U = sc.test_input.build(m, seeds["input"] + 7919)
    data = simulate_system(sc.system, U, sc.faults, sc.noise, seeds["test_noise"])
    fa, fs = sc.faults.signals(data.T, m, l)
    rows = [c - 1 for c in sc.channels]
    truth_all = fs if sc.spec.kind == "sensor_estimation" else fa
    N = data.T - sc.spec.i + 1
    truth = truth_all[rows, :N]
    art = RunArtifacts(filters, None, data, truth)
    for name, f in filters.items():
        est = runtime.estimate_fault(f, data).f_hat[rows]
        art.estimates[name] = est
        art.errors[name] = runtime.steady_error(est, truth, sc.onset, sc.n_last)
    return art


def run_once(sc: EstimationScenario, seed: int, shared_filters: dict | None = None) -> RunArtifacts:
    """One end-to-end run: identify, synthesize, tune, then estimate on a faulty test run."""
    if shared_filters is None:
        data = identification_record(sc, seed)
        filters = build_filters(sc, data)
    else:
        data, filters = None, shared_filters
    art = evaluate_filters(sc, filters, seed)
    art.ident_data = data
    return art


# ---------------------------------------------------------------- Monte Carlo

@dataclass
class MonteCarloReport:
    """Steady estimation errors of every successful run.

    ``errors[variant]`` has one row per successful run and one column per
    scored channel. ``var`` is the population variance over runs.
    """

    scenario_id: str
    base_seed: int
    seeds: list
    channels: tuple
    errors: dict
    run_seeds: list
    excluded: list = field(default_factory=list)
    timing_per_sample: float | None = None
    scenario: dict = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    @property
    def n_success(self) -> int:
        return len(self.run_seeds)

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)

    def mu(self, variant: str) -> np.ndarray:
        return self.errors[variant].mean(axis=0)

    def var(self, variant: str) -> np.ndarray:
        return self.errors[variant].var(axis=0)

    def summary(self) -> dict:
        stats = {v: {"mu": self.mu(v).tolist(), "var": self.var(v).tolist()}
                 for v in self.errors if self.errors[v].size}
        return {
            "scenario_id": self.scenario_id,
            "base_seed": self.base_seed,
            "n_runs": self.n_runs,
            "n_success": self.n_success,
            "n_excluded": self.n_excluded,
            "excluded": self.excluded,
            "channels": list(self.channels),
            "stats": stats,
            "timing_per_sample_s": self.timing_per_sample,
            "scenario": self.scenario,
        }

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "seed", "variant"] + [f"e{c}" for c in self.channels])
            for v, E in self.errors.items():
                for r, (s, row) in enumerate(zip(self.run_seeds, E)):
                    w.writerow([r, s, v] + [repr(float(x)) for x in row])

    def save(self, directory, stem: str | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        stem = stem or self.scenario_id
        self.to_csv(d / f"{stem}.csv")
        (d / f"{stem}.json").write_text(json.dumps(self.summary(), indent=2) + "\n")


def _mc_task(args):
    sc, seed, shared = args
    try:
        art = run_once(sc, seed, shared)
    except EXCLUDABLE as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"
    return seed, {k: np.asarray(v) for k, v in art.errors.items()}, None


def monte_carlo(sc: EstimationScenario, n_runs: int, base_seed: int = 0,
                shared_identification: bool = False, workers: int = 1,
                time_filter: bool = True) -> MonteCarloReport:
    """Repeat ``sc`` with seeds ``base_seed + run`` and aggregate the steady errors.

    Each run draws a new identification record and new noise. With
    ``shared_identification`` the filters are built once (from ``base_seed``)
    and only the test run is redrawn. Runs whose synthesis or tuning fails are
    excluded and listed in the report.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    shared = None
    if shared_identification:
        shared = build_filters(sc, identification_record(sc, base_seed))
    seeds = [base_seed + r for r in range(n_runs)]
    tasks = [(sc, s, shared) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_task, tasks, chunksize=max(1, n_runs // (4 * workers))))
    else:
        results = [_mc_task(t) for t in tasks]
    errors = {v: [] for v in sc.variants}
    ok_seeds, excluded = [], []
    for seed, errs, reason in results:
        if errs is None:
            excluded.append({"seed": seed, "reason": reason})
            continue
        ok_seeds.append(seed)
        for v in sc.variants:
            errors[v].append(errs[v])
    nch = len(sc.channels)
    errors = {v: np.array(e, dtype=float).reshape(-1, nch) for v, e in errors.items()}
    timing = None
    if time_filter and ok_seeds:
        art = run_once(sc, ok_seeds[0], shared)
        timing = timing_probe(art.filters[sc.variants[-1]], art.test_data)
    return MonteCarloReport(sc.scenario_id, base_seed, seeds, sc.channels, errors, ok_seeds,
                            excluded, timing, sc.to_dict())


# ---------------------------------------------------------------- timing

def timing_probe(f, data: sim.IoDataset, n_samples: int = 10_000, backend: str | None = None) -> float:
    """Median wall-clock cost of one :class:`OnlineFilter` step, in seconds.

    ``data`` is cycled until ``n_samples`` steps have been timed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    online = runtime.OnlineFilter(f, backend=backend)
    U, Y, T = data.U, data.Y, data.T
    # warm the caches and fill the window before timing
    for k in range(min(T, f.i + 5)):
        online.step(U[:, k], Y[:, k])
    costs = np.empty(n_samples)
    clock = time.perf_counter
    for s in range(n_samples):
        k = s % T
        u, y = U[:, k], Y[:, k]
        t0 = clock()
        online.step(u, y)
        costs[s] = clock() - t0
    return float(np.median(costs))


# ---------------------------------------------------------------- example 1

EX1_POLES = (0.26, 0.44)
EX1_SEVERITY = 2.0
EX1_ONSET = 150


def example1_specs() -> list:
    """Detection filter and the isolation bank ``q={1}``, ``q={2}`` (i=2)."""
    sel = dict(l=2, m=2)
    return [
        synth.FilterSpec(2, IndexSelection(**sel), "detection", EX1_POLES, "detection"),
        synth.FilterSpec(2, IndexSelection(q=[1], **sel), "actuator_isolation", EX1_POLES, "isolation_q1"),
        synth.FilterSpec(2, IndexSelection(q=[2], **sel), "actuator_isolation", EX1_POLES, "isolation_q2"),
    ]


@dataclass
class FdiRun:
    filters: list
    thresholds: list
    traces: list
    detection_flags: np.ndarray
    alarm: int | None
    verdict: runtime.IsolationVerdict
    test_data: sim.IoDataset

    def detected_within(self, onset: int = EX1_ONSET, horizon: int = 10) -> bool:
        """Whether the detection band is left at some step in ``[onset, onset + horizon]``."""
        return bool(self.detection_flags[onset:onset + horizon + 1].any())


def example1_run(seed: int = 0, severity: float = EX1_SEVERITY, amplitude: float = 5.0,
                 n_calibration: int = 100, T_ident: int = 1000, T_test: int = 400) -> FdiRun:
    """Identify, build the bank, calibrate thresholds and diagnose an actuator-1 bias."""
    seeds = run_seeds(seed)
    model = systems.get_system("example1")
    data, _ = sim.simulate(model, sim.prbs(T_ident, 2, amplitude, seed=seeds["input"]),
                           seed=seeds["ident_noise"])
    filters = []
    for spec in example1_specs():
        markov, M = ident.identify(data, spec.i, spec.design_sel)
        filters.append(synth.synthesize_data_driven(markov, M, spec))

    cal_base = seeds["test_noise"] % 1_000_000

    def healthy(s):
        return sim.simulate(model, sim.prbs(T_test, 2, amplitude, seed=s), seed=s + 1)[0]

    ths = [runtime.calibrate_thresholds(f, healthy, n_calibration, base_seed=cal_base * 1000)
           for f in filters]
    faults = sim.FaultScenario(actuator=(sim.Step(EX1_ONSET, severity), None))
    test, _ = sim.simulate(model, sim.prbs(T_test, 2, amplitude, seed=seeds["input"] + 1),
                           faults, seed=seeds["test_noise"])
    traces = [runtime.run_residual(f, test) for f in filters]
    flags = runtime.detection_flags(traces[0], ths[0])
    verdict = runtime.isolate(traces[1:], ths[1:], [1, 2], bank_id="q1_q2")
    return FdiRun(filters, ths, traces, flags, runtime.first_alarm(flags, EX1_ONSET), verdict, test)


# ---------------------------------------------------------------- plots

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ddfdie"
    return plt


def _save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)


def plot_residuals(run: FdiRun, path) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(len(run.traces), 1, figsize=(7, 2.2 * len(run.traces)), sharex=True)
    for ax, tr, th in zip(axes, run.traces, run.thresholds):
        ax.plot(tr.t, tr.norms, lw=0.8, label="|r|")
        ax.plot(tr.t, tr.windowed(), lw=1.2, label="windowed mean")
        ax.axhline(th.r_max, color="k", ls="--", lw=0.8)
        ax.axvline(EX1_ONSET, color="r", ls=":", lw=0.8)
        ax.set_ylabel(tr.filter_id)
    axes[0].legend(loc="upper left", fontsize=7)
    axes[-1].set_xlabel("k")
    _save_svg(fig, path)


def plot_estimates(t, truth, traces: dict, path, title="") -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(len(traces), 1, figsize=(7, 2.4 * len(traces)), sharex=True, squeeze=False)
    for ax, (name, est) in zip(axes[:, 0], traces.items()):
        for c in range(est.shape[0]):
            ax.plot(t, est[c], lw=0.8, label=f"estimate {c + 1}")
            ax.plot(t, truth[c], "k--", lw=0.8)
        ax.set_ylabel(name)
    axes[0, 0].set_title(title)
    axes[-1, 0].set_xlabel("k")
    _save_svg(fig, path)


def plot_scatter(reports: dict, path) -> None:
    """Paired channel-1/channel-2 steady errors, one panel per report."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(reports), figsize=(4 * len(reports), 4), squeeze=False)
    for ax, (title, rep) in zip(axes[0], reports.items()):
        for v, marker in (("untuned", "x"), ("tuned", "o")):
            E = rep.errors.get(v)
            if E is not None and E.shape[1] >= 2:
                ax.scatter(E[:, 0], E[:, 1], s=10, marker=marker, label=v)
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("error 1")
        ax.set_ylabel("error 2")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)


# ---------------------------------------------------------------- bundles

SCENARIOS = ("example1_fdi", "example2_estimation", "vtol_comparative")
DEFAULT_RUNS = {"example2_estimation": 400, "vtol_comparative": 100}


def _write_estimates(path, truth, traces: dict) -> None:
    names = list(traces)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        nch = truth.shape[0]
        w.writerow(["k"] + [f"f{c + 1}" for c in range(nch)]
                   + [f"{n}_fhat{c + 1}" for n in names for c in range(nch)])
        for t in range(truth.shape[1]):
            w.writerow([t] + [f"{v:.12g}" for v in truth[:, t]]
                       + [f"{traces[n][c, t]:.12g}" for n in names for c in range(nch)])


def _repro_example1(out: Path, seed: int, n_runs) -> dict:
    run = example1_run(seed)
    for tr in run.traces:
        tr.to_csv(out / f"residual_{tr.filter_id}.csv")
    (out / "thresholds.json").write_text(json.dumps(
        {tr.filter_id: th.to_dict() for tr, th in zip(run.traces, run.thresholds)}, indent=2) + "\n")
    runtime.verdicts_to_jsonl([run.verdict], out / "verdicts.jsonl")
    run.test_data.to_csv(out / "test_data.csv")
    plot_residuals(run, out / "fig_residuals.svg")
    return {
        "detection_alarm_k": run.alarm,
        "detected_within_10": run.detected_within(),
        "verdict": run.verdict.verdict if isinstance(run.verdict.verdict, str) else int(run.verdict.verdict),
        "verdict_onset_k": run.verdict.onset_k,
    }


def _repro_example2(out: Path, seed: int, n_runs) -> dict:
    sc = example2_scenario()
    art = run_once(sc, seed)
    t = np.arange(art.truth.shape[1])
    _write_estimates(out / "estimates.csv", art.truth, art.estimates)
    plot_estimates(t, art.truth, art.estimates, out / "fig_sensor2_estimates.svg",
                   "sensor-2 bias of 2 at k=150")
    severity = 2.0
    rel = {k: float(abs(v[0]) / severity) for k, v in art.errors.items()}
    n = DEFAULT_RUNS["example2_estimation"] if n_runs is None else n_runs
    reports = {}
    for kind in ("sensor", "actuator"):
        for inp in ("u1", "u2"):
            rep = monte_carlo(sweep_scenario(kind, inp), n, base_seed=seed, time_filter=False)
            rep.save(out, rep.scenario_id)
            reports[rep.scenario_id] = rep
    with (out / "sweep_summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "variant", "mu1", "mu2", "var1", "var2", "n_success", "n_excluded"])
        for sid, rep in reports.items():
            for v in ("untuned", "tuned"):
                w.writerow([sid, v] + [f"{x:.6g}" for x in (*rep.mu(v), *rep.var(v))]
                           + [rep.n_success, rep.n_excluded])
    plot_scatter(reports, out / "fig_sweep_scatter.svg")
    return {"relative_error": rel,
            "sweep": {sid: rep.summary()["stats"] for sid, rep in reports.items()}}


def _repro_vtol(out: Path, seed: int, n_runs) -> dict:
    n = DEFAULT_RUNS["vtol_comparative"] if n_runs is None else n_runs
    reports, summary = {}, {}
    for kind in ("actuator", "sensor"):
        rep = monte_carlo(vtol_scenario(kind), n, base_seed=seed)
        rep.save(out, rep.scenario_id)
        reports[rep.scenario_id] = rep
        summary[kind] = {"tuned_mu": rep.mu("tuned").tolist(), "tuned_var": rep.var("tuned").tolist(),
                         "n_excluded": rep.n_excluded,
                         "timing_per_sample_s": rep.timing_per_sample}
    art = run_once(vtol_scenario("actuator"), seed)
    _write_estimates(out / "actuator_estimates.csv", art.truth, art.estimates)
    plot_scatter(reports, out / "fig_vtol_scatter.svg")
    return summary


def scenario_repro(name: str, out_dir, seed: int = 0, n_runs: int | None = None) -> dict:
    """Write the CSV/SVG/JSON bundle of one example into ``out_dir``; return its summary."""
    runners = {"example1_fdi": _repro_example1, "example2_estimation": _repro_example2,
               "vtol_comparative": _repro_vtol}
    if name not in runners:
        raise ValueError(f"unknown scenario {name!r}; choose from {list(runners)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"scenario": name, "seed": seed, **runners[name](out, seed, n_runs)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    return summary
