"""Config-driven experiments, metrics and the command-line interface."""

from .config import ExperimentConfig, load_preset, preset_names, resolve
from .experiment import ExperimentError, compare, evaluate_run, run_experiment
from .metrics import MetricsReport, mean_mse, mean_rel_l2

__all__ = ["ExperimentConfig", "load_preset", "preset_names", "resolve", "ExperimentError", "compare",
           "evaluate_run", "run_experiment", "MetricsReport", "mean_mse", "mean_rel_l2"]
