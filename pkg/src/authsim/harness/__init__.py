"""Configuration, Monte Carlo runner and CSV output."""

from .config import ConfigError, ExperimentConfig, load_config, load_config_file
from .runner import run_experiment, sweep_threshold
from .table import COLUMNS, ResultRow, ResultTable, read_csv, to_csv, write_csv

__all__ = [
    "COLUMNS", "ConfigError", "ExperimentConfig", "ResultRow", "ResultTable", "load_config",
    "load_config_file", "read_csv", "run_experiment", "sweep_threshold", "to_csv", "write_csv",
]
