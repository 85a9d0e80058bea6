"""Command-line front end.

Every subcommand writes an artifact directory containing a ``manifest.json``
(configuration hash, seeds, package versions) and prints a one-line summary.
Exit status: 0 success, 1 domain failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, evaluation, ident, runtime, sim, synth, tuning
from .config import ConfigError, RunConfig, load_config
from .kernels import BACKEND

COMMANDS = ("simulate", "identify", "synth", "detect", "isolate", "estimate", "tune",
            "montecarlo", "repro")
ISOLATION_KINDS = ("actuator_isolation", "sensor_isolation")
DOMAIN_ERRORS = (ConfigError, ValueError, np.linalg.LinAlgError, RuntimeError)


# ---------------------------------------------------------------- helpers

def _versions() -> dict:
    import scipy

    return {"ddfdie": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": BACKEND}


def _write_manifest(out: Path, command: str, config_hash: str, config: dict, seeds: dict) -> None:
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()
                   and p.name != "manifest.json")
    manifest = {"command": command, "config_hash": config_hash, "config": config,
                "seeds": seeds, "versions": _versions(), "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")


def _ident_data(cfg: RunConfig, seed: int) -> sim.IoDataset:
    seeds = evaluation.run_seeds(seed)
    U = evaluation.build_record(cfg.identification.input_segments(), cfg.model.model().m, seeds["input"])
    return cfg.model.simulate(U, None, True, seeds["ident_noise"])


def _test_input(cfg: RunConfig, seed: int) -> np.ndarray:
    seg = evaluation.InputSegment(cfg.test.input, cfg.test.T, cfg.test.level)
    return seg.build(cfg.model.model().m, seed)


def _test_data(cfg: RunConfig, seed: int, faults=None) -> sim.IoDataset:
    faults = cfg.faults if faults is None else faults
    return cfg.model.simulate(_test_input(cfg, seed), faults, True, seed + 1)


def _L(cfg):
    return cfg.identification.L or None


def _build(cfg: RunConfig, fc, data: sim.IoDataset):
    if fc.exact:
        return synth.synthesize_exact(cfg.model.model(), fc.spec)
    markov, M = ident.identify(data, fc.spec.i, fc.spec.design_sel, L=_L(cfg))
    return synth.synthesize_data_driven(markov, M, fc.spec)


def _select(cfg: RunConfig, kinds, what: str) -> list:
    chosen = [fc for fc in cfg.filters if fc.spec.kind in kinds]
    if not chosen:
        raise ConfigError(f"filters: no {what} filter configured (kinds {list(kinds)})")
    return chosen


def _healthy(cfg: RunConfig):
    return lambda s: cfg.model.simulate(_test_input(cfg, s), None, True, s + 1)


def _truth(cfg: RunConfig, f, T: int) -> np.ndarray:
    model = cfg.model.model()
    fa, fs = cfg.faults.signals(T, model.m, model.l)
    src = fs if f.spec.kind == "sensor_estimation" else fa
    return src[:, :T - f.spec.i + 1]


def _scenario(cfg: RunConfig, fc) -> evaluation.EstimationScenario:
    """Monte Carlo scenario for one estimation filter of a configuration."""
    name = cfg.model.name
    if name is None or cfg.model.printed:
        raise ConfigError("model: Monte Carlo needs a named example system (example1, example2, vtol)")
    return evaluation.EstimationScenario(
        f"{name}_{fc.spec.label()}", name, fc.spec, cfg.identification.input_segments(),
        evaluation.InputSegment(cfg.test.input, cfg.test.T, cfg.test.level), cfg.faults,
        ratio=cfg.tuning.ratio, settle=cfg.tuning.settle, instrumented=cfg.tuning.instrumented,
        variants=("exact",) if fc.exact else ("untuned", "tuned"),
    )


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    t = _test_data(cfg, seed + 1)
    d.to_csv(out / "ident_data.csv")
    t.to_csv(out / "test_data.csv")
    (out / "faults.json").write_text(json.dumps(cfg.faults.to_dict(), indent=2) + "\n")
    return f"simulate: {d.T} identification and {t.T} test samples"


def cmd_identify(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    i_max = max(fc.spec.i for fc in cfg.filters)
    markov = ident.estimate_markov(d, L=_L(cfg), i=i_max)
    markov.to_csv(out / "markov.csv")
    rhos = []
    for fc in cfg.filters:
        g = ident.build_gammas(d, markov, fc.spec.i, fc.spec.design_sel)
        Mest = ident.estimate_M(g)
        Mest.to_csv(out / f"M_{fc.spec.label()}.csv")
        rhos.append(Mest.rho)
    return f"identify: L={markov.L}, {len(rhos)} M estimates, max spectral radius {max(rhos):.4f}"


def cmd_synth(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    for fc in cfg.filters:
        f = _build(cfg, fc, d)
        f.save(out / "filters" / fc.spec.label())
    return f"synth: {len(cfg.filters)} filters written"


def cmd_detect(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    test = _test_data(cfg, seed + 1)
    ev = cfg.evaluation
    lines = []
    for fc in _select(cfg, ("detection",), "detection"):
        f = _build(cfg, fc, d)
        th = runtime.calibrate_thresholds(f, _healthy(cfg), ev.calibration_runs, ev.quantiles,
                                          ev.window, base_seed=seed + 10_000)
        tr = runtime.run_residual(f, test)
        tr.to_csv(out / f"residual_{tr.filter_id}.csv")
        (out / f"thresholds_{tr.filter_id}.json").write_text(json.dumps(th.to_dict(), indent=2) + "\n")
        flags = runtime.detection_flags(tr, th, ev.window)
        onset = cfg.faults.onset()
        lines.append({"filter_id": tr.filter_id, "alarm_k": runtime.first_alarm(flags),
                      "alarm_after_onset_k": None if onset is None else runtime.first_alarm(flags, onset)})
    with (out / "alarms.jsonl").open("w") as fh:
        for rec in lines:
            fh.write(json.dumps(rec) + "\n")
    return "detect: " + ", ".join(
        f"{r['filter_id']} first alarm k={r['alarm_k']}, after onset k={r['alarm_after_onset_k']}"
        for r in lines)


def cmd_isolate(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    test = _test_data(cfg, seed + 1)
    ev = cfg.evaluation
    bank = _select(cfg, ISOLATION_KINDS, "isolation")
    traces, ths, channels = [], [], []
    for fc in bank:
        f = _build(cfg, fc, d)
        ths.append(runtime.calibrate_thresholds(f, _healthy(cfg), ev.calibration_runs, ev.quantiles,
                                                ev.window, base_seed=seed + 10_000))
        tr = runtime.run_residual(f, test)
        tr.to_csv(out / f"residual_{tr.filter_id}.csv")
        traces.append(tr)
        sel = fc.spec.sel
        channels.append(sel.q[0] if fc.spec.kind == "actuator_isolation" else sel.p[0])
    v = runtime.isolate(traces, ths, channels, ev.window, bank_id="bank")
    runtime.verdicts_to_jsonl([v], out / "verdicts.jsonl")
    (out / "thresholds.json").write_text(json.dumps(
        {tr.filter_id: th.to_dict() for tr, th in zip(traces, ths)}, indent=2) + "\n")
    return f"isolate: verdict {v.verdict} (onset k={v.onset_k})"


def _estimate_and_score(cfg, f, test, out, tag):
    est = runtime.estimate_fault(f, test)
    est.to_csv(out / f"estimate_{tag}.csv")
    onset = cfg.faults.onset()
    if onset is None:
        return None
    return runtime.steady_error(est.f_hat, _truth(cfg, f, test.T), onset).tolist()


def cmd_estimate(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    test = _test_data(cfg, seed + 1)
    errors = {}
    for fc in _select(cfg, tuning.ESTIMATION_KINDS, "estimation"):
        f = _build(cfg, fc, d)
        errors[fc.spec.label()] = _estimate_and_score(cfg, f, test, out, fc.spec.label())
    (out / "steady_errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    return "estimate: " + ", ".join(f"{k} steady error {np.round(v, 4).tolist() if v else None}"
                                    for k, v in errors.items())


def cmd_tune(cfg, out, seed, args):
    d = _ident_data(cfg, seed)
    test = _test_data(cfg, seed + 1)
    first, second = tuning.split_data(d, cfg.tuning.ratio)
    errors = {}
    for fc in _select(cfg, tuning.ESTIMATION_KINDS, "estimation"):
        f = _build(cfg, fc, first)
        tf = tuning.tune(f, second, lambda_tol=cfg.tuning.lambda_tol, settle=cfg.tuning.settle,
                         instrumented=cfg.tuning.instrumented)
        tf.save(out / "tuned" / fc.spec.label())
        label = fc.spec.label()
        errors[label] = {"untuned": _estimate_and_score(cfg, f, test, out, label + "_untuned"),
                         "tuned": _estimate_and_score(cfg, tf, test, out, label + "_tuned"),
                         "lambda": tf.est.lam, "rank_ok": tf.est.rank_ok}
    (out / "steady_errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    parts = []
    for k, v in errors.items():
        u, t = v["untuned"], v["tuned"]
        parts.append(f"{k} untuned {np.round(u, 4).tolist() if u else None} "
                     f"tuned {np.round(t, 4).tolist() if t else None}")
    return "tune: " + "; ".join(parts)


def cmd_montecarlo(cfg, out, seed, args):
    n = args.runs if args.runs is not None else cfg.evaluation.n_runs
    parts = []
    for fc in _select(cfg, tuning.ESTIMATION_KINDS, "estimation"):
        rep = evaluation.monte_carlo(_scenario(cfg, fc), n, base_seed=seed, workers=args.workers)
        rep.save(out, rep.scenario_id)
        v = list(rep.errors)[-1]
        parts.append(f"{rep.scenario_id} {v} mu {np.round(rep.mu(v), 4).tolist()} "
                     f"var {np.round(rep.var(v), 4).tolist()} ({rep.n_success}/{rep.n_runs} runs)")
    return "montecarlo: " + "; ".join(parts)


COMMAND_FUNCS = {
    "simulate": cmd_simulate, "identify": cmd_identify, "synth": cmd_synth,
    "detect": cmd_detect, "isolate": cmd_isolate, "estimate": cmd_estimate,
    "tune": cmd_tune, "montecarlo": cmd_montecarlo,
}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config 'out')")
    common.add_argument("--seed", type=int, help="base seed (default: identification.seed)")
    common.add_argument("--runs", type=int, help="Monte Carlo runs (default: evaluation.n_runs)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")
    common.add_argument("--workers", type=int, default=1, help="parallel Monte Carlo workers")

    parser = argparse.ArgumentParser(prog="ddfdie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS[:-1]:
        sub.add_parser(name, parents=[common], help=f"{name} using --config")
    rp = sub.add_parser("repro", parents=[common], help="reproduce one of the worked examples")
    rp.add_argument("scenario", choices=evaluation.SCENARIOS)
    return parser


def _run(args) -> str:
    if args.command == "repro":
        seed = 0 if args.seed is None else args.seed
        out = Path(args.out or f"repro_{args.scenario}")
        out.mkdir(parents=True, exist_ok=True)
        summary = evaluation.scenario_repro(args.scenario, out, seed=seed, n_runs=args.runs)
        conf = {"scenario": args.scenario, "seed": seed, "runs": args.runs}
        digest = hashlib.sha256(json.dumps(conf, sort_keys=True).encode()).hexdigest()
        _write_manifest(out, "repro", digest, conf, {"base_seed": seed})
        keys = [k for k in summary if k not in ("scenario", "seed", "sweep")]
        brief = ", ".join(f"{k}={summary[k]}" for k in keys)
        return f"repro {args.scenario}: {brief} -> {out}"
    if not args.config:
        raise ConfigError("--config: required for this command")
    cfg = load_config(args.config)
    seed = cfg.identification.seed if args.seed is None else args.seed
    if args.runs is not None and args.runs < 1:
        raise ConfigError("--runs: must be >= 1")
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    line = COMMAND_FUNCS[args.command](cfg, out, seed, args)
    _write_manifest(out, args.command, cfg.digest, cfg.to_dict(),
                    {"base_seed": seed, "run_seeds": evaluation.run_seeds(seed)})
    return line


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            line = _run(args)
    except DOMAIN_ERRORS as exc:
        print(f"ddfdie {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(line)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
