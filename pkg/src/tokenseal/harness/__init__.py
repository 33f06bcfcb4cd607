"""Experiment drivers behind the CLI: calibration, sweeps, benchmarks."""

from .common import ExperimentSpec, default_model, default_proxy, run_trials, write_csv

__all__ = ["ExperimentSpec", "default_model", "default_proxy", "run_trials", "write_csv"]
