"""Experiment harness: configuration, Monte Carlo runners, CSV/SVG output and the CLI."""
from .config import ExperimentSpec, GeometrySpec, RunConfig, load_config, parse_config
from .experiments import (convergence_runs, run_detection_validation, run_power_convergence,
                          run_rate_sweep, sweep_point)
from .output import CSV_HEADER, ResultRow, emit_outputs, read_csv, rows_to_csv

__all__ = [
    "CSV_HEADER",
    "ExperimentSpec",
    "GeometrySpec",
    "ResultRow",
    "RunConfig",
    "convergence_runs",
    "emit_outputs",
    "load_config",
    "parse_config",
    "read_csv",
    "rows_to_csv",
    "run_detection_validation",
    "run_power_convergence",
    "run_rate_sweep",
    "sweep_point",
]
