"""End-to-end run: data -> reconstruction -> mask -> metrics -> score model -> report."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from zfnad.evaluation import build_report, render_markdown
from zfnad.features import make_embedder
from zfnad.localize import PatchConfig
from zfnad.maskweight import build_mask, save_mask
from zfnad.metrics import collect_table
from zfnad.recon import MedianReconstructor, ReconPair, ingest_pairs
from zfnad.scorer.model import ScorerConfig, fit_score_model
from zfnad.synth import SynthSpec, generate

log = logging.getLogger(__name__)

EXIT_CODES = {
    "config": 2,
    "data": 3,
    "reconstruct": 4,
    "mask": 5,
    "metrics": 6,
    "score": 7,
    "evaluate": 8,
    "report": 9,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.exit_code = EXIT_CODES[stage]


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_pairs(cfg: dict):
    """(test pairs, mask pairs, ground truth or None) for the configured data source."""
    data = cfg["data"]
    if data["source"] == "synth":
        spec = dict(data["synth"])
        spec["mask_normals"] = cfg["m"]
        spec.setdefault("seed", cfg["seed"])
        with _stage("data"):
            ds = generate(SynthSpec.from_dict(spec))
        with _stage("reconstruct"):
            rec = MedianReconstructor(ds.train)
            test = [ReconPair(img, rec(img), lab, img.meta["image_id"]) for img, lab in zip(ds.test, ds.labels)]
            mask = [ReconPair(img, rec(img), 0, img.meta["image_id"]) for img in ds.mask]
        return test, mask, ds.truth
    with _stage("data"):
        test = ingest_pairs(data["test_manifest"])
        mask = ingest_pairs(data["mask_manifest"])[: cfg["m"]] if cfg["weighting_mask"] else []
        overlap = {p.original.meta["path"] for p in test} & {p.original.meta["path"] for p in mask}
        if overlap:
            raise ValueError(f"mask images must not be reused for testing: {sorted(overlap)[:3]}")
    return test, mask, None


def run_pipeline(cfg: dict, outdir, threads: int | None = None) -> dict:
    """Execute every stage and write model.json, metrics.csv, report.json, report.md and figures.

    Raises StageError naming the failing stage.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    threads = int(threads if threads is not None else cfg.get("threads", 1))
    test, mask_pairs, truth = load_pairs(cfg)
    embedder = make_embedder(cfg["embedder"]["mode"], cfg["embedder"].get("feature_dir"))
    mask = None
    artifacts = {}
    if cfg["weighting_mask"]:
        with _stage("mask"):
            mask = build_mask(mask_pairs)
            save_mask(out / "mask.zfnt", mask)
            artifacts["mask"] = out / "mask.zfnt"
    with _stage("metrics"):
        patch = PatchConfig(**cfg["patch"])
        table, candidates = collect_table(test, mask, patch, embedder, threads=threads, keep_candidates=True)
        table.to_csv(out / "metrics.csv")
        artifacts["metrics"] = out / "metrics.csv"
    with _stage("score"):
        scfg = ScorerConfig.from_dict({**cfg["scorer"], "seed": cfg["seed"], "threads": threads})
        fit = fit_score_model(table, scfg)
        fit.model.save(out / "model.json")
        artifacts["model"] = out / "model.json"
    with _stage("evaluate"):
        report = build_report(fit)
        if truth is not None:
            report["localization"] = coverage_summary(candidates, truth, "msk" if mask is not None else "raw")
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        (out / "report.md").write_text(render_markdown(report))
        artifacts["report"] = out / "report.json"
    with _stage("report"):
        if cfg["report"].get("figures", True):
            from zfnad import plotting

            figs = out / "figures"
            figs.mkdir(exist_ok=True)
            plotting.score_histogram(report["histogram"], report["threshold"], figs / "score_distribution")
            if report["feature_importance"]:
                plotting.importance_chart(report["feature_importance"], figs / "feature_importance")
            n_overlay = int(cfg["report"].get("overlays", 0))
            family = "msk" if mask is not None else "raw"
            for pair in sorted(test, key=lambda p: p.image_id)[:n_overlay]:
                boxes = truth[pair.image_id].boxes if truth else ()
                plotting.candidate_overlay(pair.original.gray(), candidates[pair.image_id][family],
                                           figs / f"overlay_{pair.image_id}.png", boxes)
            artifacts["figures"] = figs
    return artifacts


def coverage_summary(candidates: dict, truth: dict, family: str) -> dict:
    """Fraction of ground-truth defect boxes overlapped by at least one kept candidate."""
    covered, total, missed = 0, 0, []
    for image_id in sorted(truth):
        for box in truth[image_id].boxes:
            total += 1
            if any(c.overlaps(box) for c in candidates[image_id][family]):
                covered += 1
            else:
                missed.append(image_id)
    return {"family": family, "defects": total, "covered": covered,
            "coverage": covered / total if total else float("nan"), "missed": missed}


def seeds_in_zone(diff_values: np.ndarray, p: int, zone) -> int:
    from zfnad.localize import top_p_pixels
    from zfnad.tensor import DiffMap

    t, l, b, r = zone
    return sum(1 for (y, x) in top_p_pixels(DiffMap(diff_values), p) if t <= y < b and l <= x < r)
