"""Experiment harness: YAML config, runs and batches, file outputs, CLI."""

from se3vf.harness.config import ConfigError, ExperimentConfig, load_config, preset
from se3vf.harness.outputs import emit_outputs
from se3vf.harness.runner import (
    DIAGNOSTIC_COLUMNS,
    BatchResult,
    ExperimentResult,
    RunSummary,
    replay,
    run_batch,
    run_experiment,
)

__all__ = [
    "DIAGNOSTIC_COLUMNS",
    "BatchResult",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RunSummary",
    "emit_outputs",
    "load_config",
    "preset",
    "replay",
    "run_batch",
    "run_experiment",
]
