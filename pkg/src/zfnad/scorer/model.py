"""Composite anomaly score: fitted preprocessing + classifier + zero-false-negative threshold."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from zfnad.metrics import MetricRecord, MetricTable
from zfnad.scorer.models import KINDS, Classifier, classifier_from_dict, make_classifier
from zfnad.scorer.preprocess import PreprocState, preprocess_fit
from zfnad.scorer.training import (
    DEFAULT_SPACE,
    balance,
    fit_predict_loocv,
    search_hyperparameters,
    sub_seed,
)


@dataclass
class ScorerConfig:
    classifiers: tuple = KINDS
    iterations: int = 500
    folds: int = 5
    smote_k: int = 5
    space: dict = field(default_factory=lambda: dict(DEFAULT_SPACE))
    nested_search: bool = False
    threshold_source: str = "oof"  # or "refit"
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerConfig":
        d = dict(d)
        if "classifiers" in d:
            d["classifiers"] = tuple(d["classifiers"])
        if "space" in d:
            space = dict(DEFAULT_SPACE)
            space.update(d["space"])
            d["space"] = space
        return cls(**d)


def calibrate_zfn(probs, labels) -> float:
    """Lowest probability given to any abnormal record."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ValueError("probabilities and labels are not aligned")
    if not np.any(labels == 1):
        raise ValueError("ZFN calibration needs at least one abnormal record")
    return float(probs[labels == 1].min())


def decide(scores, threshold: float) -> np.ndarray:
    """Abnormal iff score >= threshold, so the calibrating record itself is flagged."""
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)


def schema_hash(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


@dataclass
class ScoreModel:
    preproc: PreprocState
    classifier: Classifier
    hyperparameters: dict
    zfn_threshold: float
    seed: int
    schema: list
    calibration: dict = field(default_factory=dict)

    @property
    def classifier_kind(self) -> str:
        return self.classifier.kind

    def score_matrix(self, X_kept: np.ndarray) -> np.ndarray:
        return np.clip(self.classifier.predict_proba(self.preproc.transform_matrix(X_kept)), 0.0, 1.0)

    def score_table(self, table: MetricTable) -> np.ndarray:
        return np.clip(self.classifier.predict_proba(self.preproc.transform(table)), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "format": "zfnad-score-model",
            "version": 1,
            "classifier_kind": self.classifier_kind,
            "hyperparameters": self.hyperparameters,
            "zfn_threshold": self.zfn_threshold,
            "seed": self.seed,
            "schema_hash": schema_hash(self.schema),
            "schema": list(self.schema),
            "preproc": self.preproc.to_dict(),
            "calibration": self.calibration,
            "classifier": self.classifier.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreModel":
        if d.get("format") != "zfnad-score-model":
            raise ValueError("not a score model document")
        if schema_hash(d["schema"]) != d["schema_hash"]:
            raise ValueError("score model schema hash mismatch")
        return cls(
            preproc=PreprocState.from_dict(d["preproc"]),
            classifier=classifier_from_dict(d["classifier"]),
            hyperparameters=d["hyperparameters"],
            zfn_threshold=d["zfn_threshold"],
            seed=d["seed"],
            schema=d["schema"],
            calibration=d.get("calibration", {}),
        )

    @classmethod
    def load(cls, path) -> "ScoreModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def composite_score(model: ScoreModel, record: MetricRecord) -> float:
    missing = [n for n in model.preproc.kept_features if n not in record.features]
    if missing:
        raise ValueError(f"record {record.image_id!r} lacks model features, e.g. {missing[:3]}")
    x = np.array([[np.nan if record.features[n] is None else record.features[n]
                   for n in model.preproc.kept_features]])
    if np.isnan(x).any():
        raise ValueError(f"record {record.image_id!r} has missing model features")
    return float(model.score_matrix(x)[0])


@dataclass
class FitResult:
    model: ScoreModel
    search: dict  # kind -> {"params", "cv_accuracy"}
    oof: dict  # kind -> out-of-fold probabilities (aligned with table rows)
    labels: np.ndarray
    ids: list


def _nested_loocv(X, y, kind, cfg: ScorerConfig) -> np.ndarray:
    """LOOCV where each fold runs its own hyperparameter search on the training part."""
    out = np.empty(len(y))
    for i in range(len(y)):
        train = np.r_[0:i, i + 1:len(y)]
        _, _, per_kind = search_hyperparameters(X[train], y[train], (kind,), cfg.space,
                                                cfg.iterations, cfg.folds, sub_seed(cfg.seed, 5, i), cfg.smote_k)
        Xt, yt = balance(X[train], y[train], cfg.smote_k, sub_seed(cfg.seed, 3, i))
        clf = make_classifier(kind, per_kind[kind]["params"], sub_seed(cfg.seed, 4, i)).fit(Xt, yt)
        out[i] = clf.predict_proba(X[i:i + 1])[0]
    return np.clip(out, 0.0, 1.0)


def fit_score_model(table: MetricTable, cfg: Optional[ScorerConfig] = None,
                    evaluate_all: bool = True) -> FitResult:
    """Preprocess, search, run LOOCV and calibrate the ZFN threshold.

    The classifier kind with the best search accuracy becomes the model. With
    ``evaluate_all`` every kind in the zoo also gets LOOCV probabilities, which
    the report turns into one row per classifier.
    """
    cfg = cfg or ScorerConfig()
    preproc, X = preprocess_fit(table)
    y = table.labels
    best_kind, best_params, per_kind = search_hyperparameters(
        X, y, tuple(cfg.classifiers), cfg.space, cfg.iterations, cfg.folds, cfg.seed, cfg.smote_k)
    kinds = list(cfg.classifiers) if evaluate_all else [best_kind]
    oof = {}
    for kind in kinds:
        if cfg.nested_search:
            oof[kind] = _nested_loocv(X, y, kind, cfg)
        else:
            oof[kind] = np.clip(fit_predict_loocv(X, y, kind, per_kind[kind]["params"], cfg.seed,
                                                  cfg.smote_k, cfg.threads), 0.0, 1.0)
    Xb, yb = balance(X, y, cfg.smote_k, sub_seed(cfg.seed, 6))
    clf = make_classifier(best_kind, best_params, sub_seed(cfg.seed, 7)).fit(Xb, yb)
    if cfg.threshold_source == "oof":
        calib_probs = oof[best_kind]
    elif cfg.threshold_source == "refit":
        calib_probs = np.clip(clf.predict_proba(X), 0.0, 1.0)
    else:
        raise ValueError(f"unknown threshold_source {cfg.threshold_source!r}")
    threshold = calibrate_zfn(calib_probs, y)
    model = ScoreModel(
        preproc=preproc,
        classifier=clf,
        hyperparameters=best_params,
        zfn_threshold=threshold,
        seed=cfg.seed,
        schema=list(table.schema),
        calibration={
            "source": cfg.threshold_source,
            "image_ids": table.ids,
            "labels": y.tolist(),
            "probabilities": [float(p) for p in calib_probs],
        },
    )
    return FitResult(model, per_kind, oof, y, table.ids)
