"""Composite anomaly scoring with zero-false-negative calibration."""

from zfnad.scorer.model import (
    FitResult,
    ScoreModel,
    ScorerConfig,
    calibrate_zfn,
    composite_score,
    decide,
    fit_score_model,
)
from zfnad.scorer.models import KINDS, make_classifier
from zfnad.scorer.preprocess import PreprocState, preprocess_fit
from zfnad.scorer.training import (
    balance,
    cv_accuracy,
    fit_predict_loocv,
    search_hyperparameters,
    smote,
    stratified_folds,
)

__all__ = [
    "FitResult",
    "KINDS",
    "PreprocState",
    "ScoreModel",
    "ScorerConfig",
    "balance",
    "calibrate_zfn",
    "composite_score",
    "cv_accuracy",
    "decide",
    "fit_predict_loocv",
    "fit_score_model",
    "make_classifier",
    "preprocess_fit",
    "search_hyperparameters",
    "smote",
    "stratified_folds",
]
