"""Balls-into-bins processes with limited memory, their analytics and an experiment harness."""
from .core import LoadVector, Ordering, gap, majorizes, normalize, ordering_by_load
from .harness import ExperimentConfig, derive_trial_seed, run_experiment, sweep
from .processes import ProcessConfig, ProcessState, Trace, TraceRecord, run_process
from .sampling import (EXPONENTIAL, UNIT, SamplingDistribution, WeightDistribution,
                       make_biased, make_step, make_uniform, snap_step_params)

__version__ = "0.1.0"

__all__ = [
    "LoadVector", "Ordering", "gap", "majorizes", "normalize", "ordering_by_load",
    "ExperimentConfig", "derive_trial_seed", "run_experiment", "sweep",
    "ProcessConfig", "ProcessState", "Trace", "TraceRecord", "run_process",
    "EXPONENTIAL", "UNIT", "SamplingDistribution", "WeightDistribution",
    "make_biased", "make_step", "make_uniform", "snap_step_params",
]
