"""Report figures: score distributions, feature importance and candidate overlays."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.grid": True,
    "grid.alpha": 0.25,
    "savefig.dpi": 150,
    "svg.hashsalt": "zfnad",
}
NORMAL_COLOR = "#3b7dd8"
ABNORMAL_COLOR = "#d8533b"


def _save(fig, stem: Path, formats=("png", "svg")) -> list[Path]:
    out = []
    for fmt in formats:
        path = stem.with_suffix(f".{fmt}")
        meta = {"Date": None} if fmt == "svg" else {"Software": None}
        fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight")
        out.append(path)
    plt.close(fig)
    return out


def score_histogram(hist: dict, threshold: float, stem) -> list[Path]:
    edges = np.asarray(hist["edges"])
    width = np.diff(edges)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(edges[:-1], hist["normal"], width=width, align="edge", alpha=0.7,
               color=NORMAL_COLOR, label="normal")
        ax.bar(edges[:-1], hist["abnormal"], width=width, align="edge", alpha=0.7,
               color=ABNORMAL_COLOR, label="abnormal")
        ax.axvline(0.5, color="0.3", ls=":", lw=1, label="STD threshold")
        ax.axvline(threshold, color="k", ls="--", lw=1, label="ZFN threshold")
        ax.set_xlim(0, 1)
        ax.set_xlabel("composite anomaly score")
        ax.set_ylabel("images")
        ax.legend(loc="upper center")
        return _save(fig, Path(stem))


def importance_chart(ranking: list, stem) -> list[Path]:
    names = [r["feature"] for r in ranking][::-1]
    weights = [r["weight"] for r in ranking][::-1]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 0.35 * max(len(names), 1) + 1.0))
        ax.barh(range(len(names)), weights, color=NORMAL_COLOR)
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("normalized importance")
        return _save(fig, Path(stem))


def candidate_overlay(gray: np.ndarray, candidates, path, boxes=()) -> Path:
    """PNG of the image with kept candidate windows (and optional true boxes)."""
    from matplotlib.patches import Rectangle

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(gray, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        for c in candidates:
            ax.add_patch(Rectangle((c.left - 0.5, c.top - 0.5), c.size, c.size,
                                   fill=False, lw=0.4, ec=ABNORMAL_COLOR, alpha=0.5))
        for t, l, b, r in boxes:
            ax.add_patch(Rectangle((l - 0.5, t - 0.5), r - l, b - t, fill=False, lw=1.2, ec="#2ca02c"))
        ax.set_axis_off()
        ax.grid(False)
        path = Path(path)
        fig.savefig(path, format="png", metadata={"Software": None}, bbox_inches="tight")
        plt.close(fig)
    return path
