"""Experiment harness: configuration, seeding, experiment commands, and
deterministic CSV/JSON/SVG emission."""

from .config import ExperimentConfig, parse_config, parse_config_file
from .runner import (AssertionOutcome, ExperimentResult, RunRow, run_compare,
                     run_edit, run_plot, run_reconstruct, run_sweep)
from .seeds import per_sample_seed, splitmix64

__all__ = [
    "AssertionOutcome", "ExperimentConfig", "ExperimentResult", "RunRow",
    "parse_config", "parse_config_file", "per_sample_seed", "run_compare",
    "run_edit", "run_plot", "run_reconstruct", "run_sweep", "splitmix64",
]
