"""STD vs ZFN evaluation, score histograms and feature importance."""

from __future__ import annotations

import numpy as np

from zfnad.scorer.model import FitResult, ScoreModel, calibrate_zfn, decide

STD_THRESHOLD = 0.5
HIST_BINS = 20
RATE_NAMES = ("accuracy", "precision", "fpr", "fnr")


def confusion(labels, predicted) -> dict:
    y = np.asarray(labels).astype(int)
    p = np.asarray(predicted).astype(int)
    return {
        "tp": int(np.sum((y == 1) & (p == 1))),
        "fp": int(np.sum((y == 0) & (p == 1))),
        "tn": int(np.sum((y == 0) & (p == 0))),
        "fn": int(np.sum((y == 1) & (p == 0))),
    }


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def rates(c: dict) -> dict:
    """Percentages from confusion counts; an empty denominator gives 0."""
    tp, fp, tn, fn = c["tp"], c["fp"], c["tn"], c["fn"]
    return {
        "accuracy": _pct(tp + tn, tp + tn + fp + fn),
        "precision": _pct(tp, tp + fp),
        "fpr": _pct(fp, fp + tn),
        "fnr": _pct(fn, fn + tp),
    }


def evaluate(probs, labels, zfn_threshold: float) -> dict:
    """Rates under the standard 0.5 threshold and under the ZFN threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if probs.size == 0:
        raise ValueError("nothing to evaluate")
    if probs.shape != labels.shape:
        raise ValueError("probabilities and labels are not aligned")
    out = {"threshold": float(zfn_threshold)}
    for regime, thr in (("std", STD_THRESHOLD), ("zfn", zfn_threshold)):
        c = confusion(labels, decide(probs, thr))
        out[regime] = {"confusion": c, **rates(c)}
    return out


def row(kind: str, ev: dict) -> dict:
    """Flatten an evaluation into one Table-1 style row."""
    r = {"classifier": kind, "threshold": ev["threshold"]}
    for name in RATE_NAMES:
        r[f"{name}_std"] = ev["std"][name]
        r[f"{name}_zfn"] = ev["zfn"][name]
    r["confusion_std"] = ev["std"]["confusion"]
    r["confusion_zfn"] = ev["zfn"]["confusion"]
    return r


def histogram(probs, labels, bins: int = HIST_BINS) -> dict:
    edges = np.linspace(0.0, 1.0, bins + 1)
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    return {
        "edges": edges.tolist(),
        "normal": np.histogram(probs[labels == 0], bins=edges)[0].tolist(),
        "abnormal": np.histogram(probs[labels == 1], bins=edges)[0].tolist(),
    }


def feature_importance(model: ScoreModel, top: int | None = None) -> tuple[list, str]:
    """Ranked (feature, weight) pairs and a notice for models without importances.

    Trees use mean impurity decrease, LR uses coefficient magnitudes; both are
    normalized to sum to 1. KNN and NB yield an empty ranking.
    """
    clf = model.classifier
    if getattr(clf, "n_features", None) is None:
        raise ValueError("model is not fitted")
    imp = clf.feature_importances()
    if imp is None:
        return [], f"{clf.kind} provides no feature importances"
    names = model.preproc.kept_features
    order = sorted(range(len(names)), key=lambda j: (-imp[j], j))
    ranked = [(names[j], float(imp[j])) for j in order]
    return (ranked[:top] if top else ranked), ""


def build_report(fit: FitResult, top_features: int = 10) -> dict:
    """EvalReport for every classifier kind that has out-of-fold probabilities."""
    model = fit.model
    rows = []
    for kind, probs in fit.oof.items():
        thr = calibrate_zfn(probs, fit.labels)
        r = row(kind, evaluate(probs, fit.labels, thr))
        r["cv_accuracy"] = fit.search[kind]["cv_accuracy"]
        r["hyperparameters"] = fit.search[kind]["params"]
        r["selected"] = kind == model.classifier_kind
        rows.append(r)
    calib = np.asarray(model.calibration["probabilities"])
    selected = evaluate(calib, fit.labels, model.zfn_threshold)
    ranked, notice = feature_importance(model, top_features)
    return {
        "selected_classifier": model.classifier_kind,
        "threshold": model.zfn_threshold,
        "threshold_source": model.calibration.get("source", "oof"),
        "n_records": int(len(fit.labels)),
        "n_abnormal": int(np.sum(fit.labels == 1)),
        "rows": rows,
        "selected": row(model.classifier_kind, selected),
        "histogram": histogram(calib, fit.labels),
        "feature_importance": [{"feature": n, "weight": w} for n, w in ranked],
        "feature_importance_notice": notice,
        "preprocessing": {
            "kept": len(model.preproc.kept_features),
            "dropped_missing": len(model.preproc.dropped_missing),
            "dropped_constant": len(model.preproc.dropped_constant),
            "dropped_correlated": len(model.preproc.dropped_correlated),
        },
    }


def render_markdown(report: dict) -> str:
    lines = [
        "# Anomaly score evaluation",
        "",
        f"Selected classifier: **{report['selected_classifier']}**, "
        f"ZFN threshold {report['threshold']:.6g} ({report['threshold_source']} probabilities), "
        f"{report['n_records']} records of which {report['n_abnormal']} abnormal.",
        "",
        "| Classifier | Accuracy(%) STD | Accuracy(%) ZFN | Precision(%) STD | Precision(%) ZFN "
        "| FPR(%) STD | FPR(%) ZFN | FNR(%) STD | FNR(%) ZFN |",
        "|---|" + "---:|" * 8,
    ]
    for r in report["rows"]:
        name = f"**{r['classifier']}**" if r.get("selected") else r["classifier"]
        cells = [f"{r[f'{m}_{reg}']:.2f}" for m in RATE_NAMES for reg in ("std", "zfn")]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    lines += ["", "## Most influential metrics", ""]
    if report["feature_importance"]:
        lines += ["| Rank | Feature | Weight |", "|---:|---|---:|"]
        for i, fi in enumerate(report["feature_importance"], 1):
            lines.append(f"| {i} | `{fi['feature']}` | {fi['weight']:.4f} |")
    else:
        lines.append(report["feature_importance_notice"] or "No importances available.")
    h = report["histogram"]
    lines += ["", "## Score distribution (selected classifier, calibration probabilities)", "",
              "| Bin | Normal | Abnormal |", "|---|---:|---:|"]
    for i in range(len(h["normal"])):
        lines.append(f"| [{h['edges'][i]:.2f}, {h['edges'][i + 1]:.2f}) | {h['normal'][i]} | {h['abnormal'][i]} |")
    return "\n".join(lines) + "\n"
