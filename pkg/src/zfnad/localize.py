"""Seed pixel selection and zoom-out-and-shift patch candidates ranked by Frechet distance."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from zfnad.features import BaselineEmbedder, fit_gaussian_batch, frechet_batch
from zfnad.recon import ReconPair
from zfnad.tensor import DiffMap

SHIFTS = (
    ("center", 0, 0),
    ("top-left", -1, -1),
    ("top-center", -1, 0),
    ("top-right", -1, 1),
    ("center-left", 0, -1),
    ("center-right", 0, 1),
    ("bottom-left", 1, -1),
    ("bottom-center", 1, 0),
    ("bottom-right", 1, 1),
)
SHIFT_NAMES = tuple(s[0] for s in SHIFTS)


@dataclass(frozen=True)
class PatchConfig:
    p: int = 100
    n: int = 4
    alpha: int = 4
    q: int = 250

    def __post_init__(self):
        if self.p < 1 or self.n < 1 or self.alpha < 1:
            raise ValueError("p, n and alpha must be >= 1")
        if not 1 <= self.q <= self.p * self.n * len(SHIFTS):
            raise ValueError(f"q must lie in [1, p*n*9 = {self.p * self.n * len(SHIFTS)}], got {self.q}")

    @property
    def max_size(self) -> int:
        return self.alpha * self.n


@dataclass(frozen=True)
class PatchCandidate:
    center_row: int
    center_col: int
    size: int
    level: int
    shift: str
    top: int
    left: int
    score: float = 0.0

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        """(top, left, bottom, right) with exclusive bottom/right."""
        return (self.top, self.left, self.top + self.size, self.left + self.size)

    def overlaps(self, box: Sequence[int]) -> bool:
        """Overlap test against a (top, left, bottom, right) box, exclusive ends."""
        t, l, b, r = box
        return self.top < b and t < self.top + self.size and self.left < r and l < self.left + self.size

    def as_dict(self) -> dict:
        return {
            "center": [self.center_row, self.center_col],
            "level": self.level,
            "size": self.size,
            "shift": self.shift,
            "bounds": list(self.bounds),
            "score": self.score,
        }


def top_p_pixels(diff: DiffMap, p: int) -> list[tuple[int, int]]:
    """The p largest pixels; ties go to the smaller row, then the smaller column."""
    v = diff.values
    if p > v.size:
        raise ValueError(f"p={p} exceeds pixel count {v.size}")
    if p < 1:
        raise ValueError("p must be >= 1")
    order = np.argsort(-v.ravel().astype(np.float64), kind="stable")[:p]
    rows, cols = np.divmod(order, v.shape[1])
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def make_candidates(seed: tuple[int, int], cfg: PatchConfig, image_dims: tuple[int, int]) -> list[PatchCandidate]:
    """n x 9 windows around a seed: one centered window and 8 half-side shifts per level.

    Even sizes put the seed in the upper-left of the central 2x2. Windows that
    would leave the image are translated back inside, keeping their size.
    """
    h, w = image_dims[0], image_dims[1]
    r, c = seed
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"seed {seed} outside image {h}x{w}")
    if cfg.max_size > h or cfg.max_size > w:
        raise ValueError(f"image {h}x{w} smaller than largest patch side {cfg.max_size}")
    out = []
    for level in range(1, cfg.n + 1):
        s = cfg.alpha * level
        back = (s + 1) // 2 - 1
        step = s // 2
        for name, dr, dc in SHIFTS:
            top = min(max(r - back + dr * step, 0), h - s)
            left = min(max(c - back + dc * step, 0), w - s)
            out.append(PatchCandidate(r, c, s, level, name, top, left))
    return out


def _extract(gray: np.ndarray, tops: np.ndarray, lefts: np.ndarray, s: int) -> np.ndarray:
    offs = np.arange(s)
    rows = tops[:, None, None] + offs[None, :, None]
    cols = lefts[:, None, None] + offs[None, None, :]
    return gray[rows, cols]


def score_candidates(pair: ReconPair, candidates: Sequence[PatchCandidate], embedder=None) -> np.ndarray:
    """Frechet distance between original and reconstructed patch embeddings per candidate."""
    embedder = embedder or BaselineEmbedder()
    g0, g1 = pair.original.gray(), pair.reconstruction.gray()
    scores = np.zeros(len(candidates))
    sizes = np.array([c.size for c in candidates])
    tops = np.array([c.top for c in candidates])
    lefts = np.array([c.left for c in candidates])
    for s in np.unique(sizes):
        idx = np.nonzero(sizes == s)[0]
        pa = _extract(g0, tops[idx], lefts[idx], int(s))
        pb = _extract(g1, tops[idx], lefts[idx], int(s))
        mua, ca = fit_gaussian_batch(embedder.embed_patches(pa))
        mub, cb = fit_gaussian_batch(embedder.embed_patches(pb))
        scores[idx] = frechet_batch(mua, ca, mub, cb)
    return scores


def rank_candidates(pair: ReconPair, seeds: Sequence[tuple[int, int]], cfg: PatchConfig,
                    embedder=None) -> list[PatchCandidate]:
    """The q highest-scoring candidates in descending score order.

    Ties keep enumeration order: seed, then level, then shift.
    """
    total = len(seeds) * cfg.n * len(SHIFTS)
    if cfg.q > total:
        raise ValueError(f"q={cfg.q} exceeds candidate count {total}")
    dims = (pair.original.height, pair.original.width)
    cands = [c for seed in seeds for c in make_candidates(seed, cfg, dims)]
    scores = score_candidates(pair, cands, embedder)
    order = np.argsort(-scores, kind="stable")[:cfg.q]
    return [replace(cands[i], score=float(scores[i])) for i in order]


def crop_pair(pair: ReconPair, cand: PatchCandidate) -> tuple[np.ndarray, np.ndarray]:
    t, l, b, r = cand.bounds
    return pair.original.gray()[t:b, l:r], pair.reconstruction.gray()[t:b, l:r]
