"""Classifier training, scoring and the retraining experiment"""

from app.harness.experiment import ExperimentResult, retraining_experiment
from app.harness.report import ClassifierReport, evaluate_classifier, score_predictions, worst_phases
from app.harness.scores import flag_accuracy, macro_auroc, micro_f1
from app.harness.training import ClassifierTrainingConfig, oversample, train_classifier

__all__ = [
    "ClassifierReport",
    "ClassifierTrainingConfig",
    "ExperimentResult",
    "evaluate_classifier",
    "flag_accuracy",
    "macro_auroc",
    "micro_f1",
    "oversample",
    "retraining_experiment",
    "score_predictions",
    "train_classifier",
    "worst_phases",
]
