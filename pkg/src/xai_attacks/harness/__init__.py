"""Config-driven experiment harness."""

from .config import (
    AttackEntry,
    ConfigError,
    DatasetConfig,
    ExperimentConfig,
    ExplainerEntry,
    ModelEntry,
    PreprocessConfig,
    Thresholds,
)
from .evaluation import evaluate_asr, evaluate_fe_success, evaluate_me
from .report import METRIC_COLUMNS, ExperimentReport, emit_report, load_report
from .runner import DEFENSE_FOR, HarnessError, adversarial_target, run_experiment

__all__ = [
    "DEFENSE_FOR", "METRIC_COLUMNS", "AttackEntry", "ConfigError", "DatasetConfig", "ExperimentConfig",
    "ExperimentReport", "ExplainerEntry", "HarnessError", "ModelEntry", "PreprocessConfig", "Thresholds",
    "adversarial_target", "emit_report", "evaluate_asr", "evaluate_fe_success", "evaluate_me", "load_report",
    "run_experiment",
]
