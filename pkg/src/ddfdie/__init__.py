"""Fault detection, isolation and estimation filters built from input/output data."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .structmat import IndexSelection, build_block_matrices, build_hankel, pinv_tol, stack_signal
from .sim import FaultScenario, IoDataset, Sinusoid, StateSpaceModel, Step, prbs, simulate
from .ident import MarkovSequence, MEstimate, build_gammas, estimate_M, estimate_markov, identify
from .synth import (
    FilterRealization,
    FilterSpec,
    InfeasibleFilterError,
    reduce_filter,
    synthesize_data_driven,
    synthesize_exact,
)
from .runtime import (
    Thresholds,
    calibrate_thresholds,
    estimate_actuator_fault,
    estimate_sensor_fault,
    isolate,
    run_residual,
)
from .tuning import TunedFilter, identify_error_dynamics, split_data, tune
from .evaluation import MonteCarloReport, monte_carlo, scenario_repro, timing_probe
from .config import load_config

__all__ = [
    "BACKEND",
    "IndexSelection",
    "build_block_matrices",
    "build_hankel",
    "pinv_tol",
    "stack_signal",
    "FaultScenario",
    "IoDataset",
    "Sinusoid",
    "StateSpaceModel",
    "Step",
    "prbs",
    "simulate",
    "MarkovSequence",
    "MEstimate",
    "build_gammas",
    "estimate_M",
    "estimate_markov",
    "identify",
    "FilterRealization",
    "FilterSpec",
    "InfeasibleFilterError",
    "reduce_filter",
    "synthesize_data_driven",
    "synthesize_exact",
    "Thresholds",
    "calibrate_thresholds",
    "estimate_actuator_fault",
    "estimate_sensor_fault",
    "isolate",
    "run_residual",
    "TunedFilter",
    "identify_error_dynamics",
    "split_data",
    "tune",
    "MonteCarloReport",
    "monte_carlo",
    "scenario_repro",
    "timing_probe",
    "load_config",
]
