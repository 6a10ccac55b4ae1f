"""Image-, pixel- and patch-level metric extraction into a tabular dataset.

Feature names follow ``family.level.kind.aggregate``: ``img.*`` features are
computed once per pair, while the ``raw.*`` (unmasked) and ``msk.*`` (masked)
families each select their own seed pixels and patch candidates.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from zfnad.distances import DISTANCE_KINDS, keypoint_match_distance, patch_distance_batch
from zfnad.features import BaselineEmbedder, perceptual_mse
from zfnad.localize import PatchCandidate, PatchConfig, _extract, rank_candidates, top_p_pixels
from zfnad.maskweight import WeightMask, apply_mask
from zfnad.recon import ReconPair
from zfnad.tensor import Aggregates, DiffMap, abs_diff, aggregate, mse

AGG = Aggregates.FIELDS
IMAGE_SCALARS = ("mse", "perceptual", "quant_loss", "disc_orig", "disc_recon", "keypoint")


def _agg_names(prefix: str) -> list[str]:
    return [f"{prefix}.{a}" for a in AGG]


def image_feature_names() -> list[str]:
    return [f"img.{n}" for n in IMAGE_SCALARS] + _agg_names("img.diff")


def family_feature_names(family: str) -> list[str]:
    names = _agg_names(f"{family}.diff") + _agg_names(f"{family}.pix")
    for kind in DISTANCE_KINDS:
        names += _agg_names(f"{family}.patch.{kind}")
    return names


def schema_for(masked: bool) -> list[str]:
    names = image_feature_names() + family_feature_names("raw")
    if masked:
        names += family_feature_names("msk")
    return names


def _prefixed(prefix: str, agg: Aggregates) -> dict[str, float]:
    return {f"{prefix}.{k}": v for k, v in agg.as_dict().items()}


@dataclass
class MetricRecord:
    image_id: str
    label: int
    features: dict
    provenance: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"record {self.image_id!r}: label must be 0 or 1")
        for k, v in self.features.items():
            if v is not None and math.isnan(v):
                raise ValueError(f"record {self.image_id!r}: feature {k} is NaN")


@dataclass
class MetricTable:
    records: list
    schema: list = field(default_factory=list)

    def __post_init__(self):
        if not self.schema and self.records:
            self.schema = list(self.records[0].features)
        for r in self.records:
            if list(r.features) != list(self.schema):
                raise ValueError(f"record {r.image_id!r} does not match the table schema")

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        """Feature matrix with missing values as NaN."""
        names = list(names if names is not None else self.schema)
        out = np.empty((len(self.records), len(names)))
        for i, r in enumerate(self.records):
            for j, n in enumerate(names):
                v = r.features.get(n)
                out[i, j] = np.nan if v is None else v
        return out

    def sorted(self) -> "MetricTable":
        return MetricTable(sorted(self.records, key=lambda r: r.image_id), list(self.schema))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", "label", *self.schema])
            for r in self.records:
                w.writerow([r.image_id, r.label,
                            *("" if r.features[n] is None else format(r.features[n], ".17g") for n in self.schema)])

    @classmethod
    def from_csv(cls, path) -> "MetricTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["image_id", "label"]:
                raise ValueError(f"{path}: first columns must be image_id,label")
            schema = header[2:]
            records = []
            for row in reader:
                if len(row) != len(header):
                    raise ValueError(f"{path}: row for {row[0]!r} has {len(row)} fields, expected {len(header)}")
                feats = {n: (None if v == "" else float(v)) for n, v in zip(schema, row[2:])}
                records.append(MetricRecord(row[0], int(row[1]), feats))
        return cls(records, schema)


def config_hash(cfg: PatchConfig, masked: bool, embedder_mode: str) -> str:
    blob = json.dumps({"p": cfg.p, "n": cfg.n, "alpha": cfg.alpha, "q": cfg.q,
                       "masked": masked, "embedder": embedder_mode}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def image_level(pair: ReconPair, embedder=None) -> dict:
    embedder = embedder or BaselineEmbedder()
    sc = pair.sidecar
    if sc.perceptual_loss is not None:
        perceptual = sc.perceptual_loss
    else:
        perceptual = perceptual_mse(pair.original, pair.reconstruction, embedder)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        kp = keypoint_match_distance(pair.original, pair.reconstruction)
    feats = {
        "img.mse": mse(pair.original, pair.reconstruction),
        "img.perceptual": perceptual,
        "img.quant_loss": sc.quantization_loss,
        "img.disc_orig": sc.disc_loss_original,
        "img.disc_recon": sc.disc_loss_reconstruction,
        "img.keypoint": kp,
    }
    feats.update(_prefixed("img.diff", aggregate(abs_diff(pair.original, pair.reconstruction).values)))
    return feats


def pixel_level(diff: DiffMap, p: int, prefix: str = "pix") -> dict:
    seeds = top_p_pixels(diff, p)
    vals = [float(diff.values[r, c]) for r, c in seeds]
    return _prefixed(prefix, aggregate(vals))


def patch_level(candidates: Sequence[PatchCandidate], pair: ReconPair, prefix: str = "patch") -> dict:
    if not candidates:
        raise ValueError("patch_level needs at least one candidate")
    g0, g1 = pair.original.gray(), pair.reconstruction.gray()
    sizes = np.array([c.size for c in candidates])
    tops = np.array([c.top for c in candidates])
    lefts = np.array([c.left for c in candidates])
    values = {k: np.empty(len(candidates)) for k in DISTANCE_KINDS}
    for s in np.unique(sizes):
        idx = np.nonzero(sizes == s)[0]
        pa = _extract(g0, tops[idx], lefts[idx], int(s))
        pb = _extract(g1, tops[idx], lefts[idx], int(s))
        for k in DISTANCE_KINDS:
            values[k][idx] = patch_distance_batch(k, pa, pb)
    feats = {}
    for k in DISTANCE_KINDS:
        feats.update(_prefixed(f"{prefix}.{k}", aggregate(values[k])))
    return feats


def family_level(family: str, pair: ReconPair, diff: DiffMap, cfg: PatchConfig, embedder=None):
    """Diff aggregates, top-p pixel aggregates and patch distances for one family."""
    feats = _prefixed(f"{family}.diff", aggregate(diff.values))
    feats.update(pixel_level(diff, cfg.p, prefix=f"{family}.pix"))
    seeds = top_p_pixels(diff, cfg.p)
    cands = rank_candidates(pair, seeds, cfg, embedder)
    feats.update(patch_level(cands, pair, prefix=f"{family}.patch"))
    return feats, cands


def analyze(pair: ReconPair, mask: Optional[WeightMask], cfg: PatchConfig, embedder=None):
    """Features of one pair plus the kept candidates per family."""
    if pair.label is None:
        raise ValueError(f"pair {pair.image_id!r} has no label")
    embedder = embedder or BaselineEmbedder()
    diff = abs_diff(pair.original, pair.reconstruction)
    if mask is not None and mask.weights.shape != diff.values.shape:
        raise ValueError(f"mask {mask.weights.shape} does not match image {diff.values.shape}")
    feats = image_level(pair, embedder)
    raw, raw_c = family_level("raw", pair, diff, cfg, embedder)
    feats.update(raw)
    cands = {"raw": raw_c}
    if mask is not None:
        msk, msk_c = family_level("msk", pair, apply_mask(diff, mask), cfg, embedder)
        feats.update(msk)
        cands["msk"] = msk_c
    prov = config_hash(cfg, mask is not None, getattr(embedder, "mode", "custom"))
    return MetricRecord(pair.image_id, pair.label, feats, prov), cands


def collect(pair: ReconPair, mask: Optional[WeightMask], cfg: PatchConfig, embedder=None) -> MetricRecord:
    return analyze(pair, mask, cfg, embedder)[0]


def collect_table(pairs: Sequence[ReconPair], mask: Optional[WeightMask], cfg: PatchConfig,
                  embedder=None, threads: int = 1, keep_candidates: bool = False):
    """Metric table over many pairs, rows sorted by image_id.

    With ``keep_candidates`` also returns ``{image_id: {family: candidates}}``.
    """
    ids = [p.image_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("image ids must be unique within a table")

    def work(pair):
        return analyze(pair, mask, cfg, embedder)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    table = MetricTable([r for r, _ in results], schema_for(mask is not None)).sorted()
    if keep_candidates:
        return table, {r.image_id: c for r, c in results}
    return table


def write_candidates(path, candidates: dict) -> None:
    out = {fam: [c.as_dict() for c in cands] for fam, cands in candidates.items()}
    Path(path).write_text(json.dumps(out, indent=2) + "\n")
