"""Experiment harness: configs, runners, test integrands and the command line."""

from .config import EXPERIMENTS, ExperimentConfig, build_config, load_config
from .experiments import RunResult, run_experiment

__all__ = ["EXPERIMENTS", "ExperimentConfig", "build_config", "load_config", "RunResult", "run_experiment"]
