from .data import binarize_labels, describe, load_dataset, standardize, synthetic_regression, write_csv
from .experiment import (
    SAMPLERS,
    ExperimentResult,
    Problem,
    prepare,
    run_experiment,
    run_replicates,
    run_sampler,
    run_sweep,
    write_run,
    write_sweep,
)
from .traces import (
    ConvergenceTrace,
    IqrCurve,
    RunningMean,
    default_grid,
    iqr_aggregate,
    log_grid,
    running_estimate_trace,
    stabilization_point,
)

__all__ = [
    "SAMPLERS",
    "ConvergenceTrace",
    "ExperimentResult",
    "IqrCurve",
    "Problem",
    "RunningMean",
    "binarize_labels",
    "default_grid",
    "describe",
    "iqr_aggregate",
    "load_dataset",
    "log_grid",
    "prepare",
    "run_experiment",
    "run_replicates",
    "run_sampler",
    "run_sweep",
    "running_estimate_trace",
    "stabilization_point",
    "standardize",
    "synthetic_regression",
    "write_csv",
    "write_run",
    "write_sweep",
]
