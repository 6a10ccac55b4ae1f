"""Distances between original and reconstructed patches, and a keypoint matching distance.

All patch distances work on gray (channel-mean) patches flattened to vectors.
The batched entry point takes stacks of equally sized patches.
"""

from __future__ import annotations

import warnings
from enum import Enum

import numpy as np
from scipy import ndimage

from zfnad.features import frechet_between_patches
from zfnad.tensor import ImageTensor

JSD_EPS = 1e-12
HAMMING_LEVEL = 0.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

FAST_THRESHOLD = 0.1
FAST_ARC = 9
BRIEF_WINDOW = 31
BRIEF_BITS = 256
BRIEF_SEED = 20240131
MATCH_RATIO = 0.8


class DistanceKind(str, Enum):
    FRECHET = "frechet"
    SSIM = "ssim"
    BRAYCURTIS = "braycurtis"
    CANBERRA = "canberra"
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    WASSERSTEIN = "wasserstein"
    HAMMING = "hamming"
    MINKOWSKI3 = "minkowski3"
    JENSENSHANNON = "jensenshannon"


DISTANCE_KINDS = tuple(k.value for k in DistanceKind)


class SmallImageWarning(UserWarning):
    """The image is smaller than the descriptor window, so no keypoints exist."""


def _rows(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return u.reshape(u.shape[0], -1)


def _euclidean(u, v):
    d = u - v
    return np.sqrt((d * d).sum(axis=1))


def _cosine(u, v):
    uu, vv = (u * u).sum(axis=1), (v * v).sum(axis=1)
    uv = (u * v).sum(axis=1)
    den = np.sqrt(uu * vv)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.maximum(1.0 - uv / den, 0.0)
    degenerate = den == 0
    equal = np.all(u == v, axis=1)
    out[degenerate] = np.where(equal[degenerate], 0.0, 1.0)
    return out


def _canberra(u, v):
    num = np.abs(u - v)
    den = np.abs(u) + np.abs(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(den > 0, num / den, 0.0)
    return terms.sum(axis=1)


def _braycurtis(u, v):
    num = np.abs(u - v).sum(axis=1)
    den = (u + v).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den != 0, num / den, 0.0)


def _minkowski3(u, v):
    return np.cbrt((np.abs(u - v) ** 3).sum(axis=1))


def _hamming(u, v):
    return ((u >= HAMMING_LEVEL) != (v >= HAMMING_LEVEL)).mean(axis=1)


def _wasserstein(u, v):
    return np.abs(np.sort(u, axis=1) - np.sort(v, axis=1)).mean(axis=1)


def _kl2(p, m):
    return (p * np.log2(p / m)).sum(axis=1)


def _jensenshannon(u, v):
    p = u + JSD_EPS
    q = v + JSD_EPS
    p = p / p.sum(axis=1, keepdims=True)
    q = q / q.sum(axis=1, keepdims=True)
    m = 0.5 * (p + q)
    jsd = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return np.clip(jsd, 0.0, 1.0)


def _ssim(u, v):
    mu_u, mu_v = u.mean(axis=1), v.mean(axis=1)
    du, dv = u - mu_u[:, None], v - mu_v[:, None]
    var_u, var_v = (du * du).mean(axis=1), (dv * dv).mean(axis=1)
    cov = (du * dv).mean(axis=1)
    num = (2 * mu_u * mu_v + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_u * mu_u + mu_v * mu_v + SSIM_C1) * (var_u + var_v + SSIM_C2)
    return num / den


_VECTOR_DISTANCES = {
    "euclidean": _euclidean,
    "cosine": _cosine,
    "canberra": _canberra,
    "braycurtis": _braycurtis,
    "minkowski3": _minkowski3,
    "hamming": _hamming,
    "wasserstein": _wasserstein,
    "jensenshannon": _jensenshannon,
    "ssim": _ssim,
}


def patch_distance_batch(kind, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance of kind ``kind`` between paired gray patches of shape (B, h, w)."""
    kind = DistanceKind(kind).value
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.ndim < 2 or a[0].size == 0:
        raise ValueError("empty patch")
    if kind == "frechet":
        return frechet_between_patches(a, b)
    return _VECTOR_DISTANCES[kind](_rows(a), _rows(b))


def patch_distance(kind, a: ImageTensor, b: ImageTensor) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(patch_distance_batch(kind, a.gray()[None], b.gray()[None])[0])


# --- keypoint matching ----------------------------------------------------

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock
_CIRCLE = np.array([
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
])


def _brief_pattern() -> np.ndarray:
    rng = np.random.default_rng(BRIEF_SEED)
    half = BRIEF_WINDOW // 2
    pts = np.rint(rng.normal(0.0, BRIEF_WINDOW / 5.0, size=(BRIEF_BITS, 4)))
    return np.clip(pts, -half, half).astype(np.intp)


_PATTERN = _brief_pattern()


def fast_corners(gray: np.ndarray, threshold: float = FAST_THRESHOLD, arc: int = FAST_ARC) -> np.ndarray:
    """Segment-test corners as an (K, 2) array of (row, col), row-major order.

    Only pixels whose full descriptor window fits inside the image are kept.
    """
    g = np.asarray(gray, dtype=np.float64)
    h, w = g.shape
    half = BRIEF_WINDOW // 2
    if h < BRIEF_WINDOW or w < BRIEF_WINDOW:
        return np.empty((0, 2), dtype=np.intp)
    center = g[half:h - half, half:w - half]
    ring = np.stack([g[half + dr:h - half + dr, half + dc:w - half + dc] for dr, dc in _CIRCLE])
    corner = np.zeros(center.shape, dtype=bool)
    for cmp in (ring > center + threshold, ring < center - threshold):
        wrapped = np.concatenate([cmp, cmp[:arc - 1]])
        for start in range(len(_CIRCLE)):
            corner |= np.all(wrapped[start:start + arc], axis=0)
    rows, cols = np.nonzero(corner)
    return np.stack([rows + half, cols + half], axis=1)


def brief_descriptors(gray: np.ndarray, keypoints: np.ndarray) -> np.ndarray:
    """256-bit binary tests on a box-smoothed image, as a (K, 256) uint8 array."""
    if len(keypoints) == 0:
        return np.empty((0, BRIEF_BITS), dtype=np.uint8)
    smooth = ndimage.uniform_filter(np.asarray(gray, dtype=np.float64), size=5, mode="nearest")
    r, c = keypoints[:, 0:1], keypoints[:, 1:2]
    p1 = smooth[r + _PATTERN[:, 0], c + _PATTERN[:, 1]]
    p2 = smooth[r + _PATTERN[:, 2], c + _PATTERN[:, 3]]
    return (p1 < p2).astype(np.uint8)


def _count_matches(ka, da, kb, db) -> int:
    da = da.astype(np.int32)
    db = db.astype(np.int32)
    ham = da @ (1 - db).T + (1 - da) @ db.T
    spatial = ((ka[:, None, :] - kb[None, :, :]) ** 2).sum(axis=2)
    # equal Hamming distances fall back to the spatially closest keypoint
    key = ham.astype(np.int64) * (int(spatial.max()) + 1) + spatial
    best_b = key.argmin(axis=1)
    best_a = key.argmin(axis=0)

    def ratio_ok(dist_rows, best):
        if dist_rows.shape[1] < 2:
            return np.ones(dist_rows.shape[0], dtype=bool)
        d1 = dist_rows[np.arange(len(best)), best]
        others = dist_rows.astype(np.float64).copy()
        others[np.arange(len(best)), best] = np.inf
        d2 = others.min(axis=1)
        return d1 <= MATCH_RATIO * d2

    ok_a = ratio_ok(ham, best_b)
    ok_b = ratio_ok(ham.T, best_a)
    idx = np.arange(len(ka))
    mutual = best_a[best_b] == idx
    return int(np.sum(mutual & ok_a & ok_b[best_b]))


def keypoint_match_distance(a: ImageTensor, b: ImageTensor) -> float:
    """1 - 2 |matches| / (|K_a| + |K_b|) with FAST corners and BRIEF-style descriptors.

    Orientation is ignored since images are registered. Both sides empty
    gives 0, exactly one side empty gives 1.
    """
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.height < BRIEF_WINDOW or a.width < BRIEF_WINDOW:
        warnings.warn(
            f"image {a.height}x{a.width} is smaller than the {BRIEF_WINDOW}px descriptor window",
            SmallImageWarning,
            stacklevel=2,
        )
        return 1.0
    ga, gb = a.gray(), b.gray()
    ka, kb = fast_corners(ga), fast_corners(gb)
    if len(ka) == 0 and len(kb) == 0:
        return 0.0
    if len(ka) == 0 or len(kb) == 0:
        return 1.0
    matches = _count_matches(ka, brief_descriptors(ga, ka), kb, brief_descriptors(gb, kb))
    return 1.0 - 2.0 * matches / (len(ka) + len(kb))
