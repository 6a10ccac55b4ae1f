"""Weighting mask that damps regions where normal images already vary a lot."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from zfnad.recon import ReconPair
from zfnad.tensor import DiffMap, abs_diff, read_native, write_native


@dataclass(frozen=True, eq=False)
class WeightMask:
    weights: np.ndarray
    m_used: int
    sources: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        if w.ndim != 2:
            raise ValueError("mask weights must be 2-D")
        if not np.all(np.isfinite(w)) or w.min() < 0 or w.max() > 1:
            raise ValueError("mask weights must lie in [0, 1]")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]


def pair_digest(pair: ReconPair) -> str:
    h = hashlib.sha256()
    h.update(pair.original.data.tobytes())
    h.update(pair.reconstruction.data.tobytes())
    return h.hexdigest()


def build_mask(pairs: Sequence[ReconPair]) -> WeightMask:
    """Flip of the min-max normalized mean difference over held-out normal pairs."""
    if len(pairs) < 2:
        raise ValueError(f"mask needs at least 2 normal pairs, got {len(pairs)}")
    shape = pairs[0].original.shape
    for i, p in enumerate(pairs):
        if p.label not in (0, None):
            raise ValueError(f"pair {i} ({p.image_id!r}) is not labeled normal")
        if p.original.shape != shape:
            raise ValueError(f"pair {i} has shape {p.original.shape}, expected {shape}")
    diffs = np.stack([abs_diff(p.original, p.reconstruction).values.astype(np.float64) for p in pairs])
    # sorting over the pair axis makes the mean independent of input order
    mean = np.sort(diffs, axis=0).sum(axis=0) / len(pairs)
    lo, hi = mean.min(), mean.max()
    if hi == lo:
        raise ValueError("mean normal difference is constant; mask normalization is undefined")
    weights = 1.0 - (mean - lo) / (hi - lo)
    return WeightMask(weights, len(pairs), tuple(sorted(pair_digest(p) for p in pairs)))


def apply_mask(diff: DiffMap, mask: WeightMask) -> DiffMap:
    if diff.values.shape != mask.weights.shape:
        raise ValueError(f"mask {mask.weights.shape} does not match diff {diff.values.shape}")
    return DiffMap(diff.values * mask.weights)


def save_mask(path, mask: WeightMask) -> Path:
    """Write the weights as a native tensor and a ``.json`` header next to it."""
    path = Path(path)
    write_native(path, mask.weights)
    header = path.with_suffix(".json")
    header.write_text(json.dumps({
        "m_used": mask.m_used,
        "height": mask.height,
        "width": mask.width,
        "sources": list(mask.sources),
    }, indent=2) + "\n")
    return header


def load_mask(path) -> WeightMask:
    path = Path(path)
    weights = read_native(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if tuple(weights.shape) != (meta["height"], meta["width"]):
        raise ValueError(f"{path}: header dims do not match payload")
    return WeightMask(weights, int(meta["m_used"]), tuple(meta.get("sources", ())))
