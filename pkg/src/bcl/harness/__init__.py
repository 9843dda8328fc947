"""Experiment plumbing: configuration, evaluation, checkpoints, ledger, reports, CLI."""
from ..scoring import median_of_runs, model_score, phase_eval_score
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, parse_config
from .evaluation import EvalReport, EvalSummary, ModelEvaluator, default_suite, evaluate, sem
from .experiment import run_experiment
from .ledger import Ledger, canonical, read_ledger
from .report import write_report

__all__ = [
    "Checkpoint", "EvalReport", "EvalSummary", "ExperimentConfig", "Ledger", "ModelEvaluator",
    "canonical", "default_suite", "evaluate", "load_checkpoint", "load_config",
    "median_of_runs", "model_score", "parse_config", "phase_eval_score", "read_ledger",
    "run_experiment", "save_checkpoint", "sem", "write_report",
]
