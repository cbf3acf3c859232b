"""Configuration, synthetic data, training loop, benchmarks and CLI."""
from .config import DatasetConfig, RunConfig, build_config, load_config_file
from .data import generate_synthetic_dataset
from .metrics import MetricsRow, curriculum_trace, emit_metrics_csv, read_metrics_csv
from .run import run_training

__all__ = [
    "DatasetConfig", "MetricsRow", "RunConfig", "build_config", "curriculum_trace",
    "emit_metrics_csv", "generate_synthetic_dataset", "load_config_file", "read_metrics_csv",
    "run_training",
]
