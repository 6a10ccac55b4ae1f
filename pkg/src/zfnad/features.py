"""Patch embedders, Gaussian fitting and the Frechet distance.

The baseline embedder splits a patch into a grid of at most 4 x 4 cells and
describes every cell with six local statistics; the cells act as the samples
from which a Gaussian is fitted. Everything here has a batched form working
on stacks of equally sized patches, which is what the localizer uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from zfnad.tensor import ImageTensor, mse, read_native

SHRINKAGE = 1e-6
MAX_GRID = 4
CELL_FEATURES = ("mean", "std", "grad_h", "grad_v", "min", "max")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    vectors: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("FeatureSet needs at least one vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("FeatureSet vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianFit:
    mean: np.ndarray
    covariance: np.ndarray


def _edges(n: int, g: int) -> np.ndarray:
    return (np.arange(g + 1) * n) // g


def embed_batch(patches: np.ndarray) -> np.ndarray:
    """Grid-cell statistics for a stack of gray patches.

    ``patches`` has shape (B, H, W); returns (B, gh * gw, 6) with cells in
    row-major order. Gradients are forward differences taken inside each cell,
    so a cell one pixel wide has zero horizontal gradient.
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    b, h, w = x.shape
    if h == 0 or w == 0:
        raise ValueError("cannot embed an empty patch")
    gh, gw = min(MAX_GRID, h), min(MAX_GRID, w)
    re, ce = _edges(h, gh), _edges(w, gw)
    out = np.empty((b, gh * gw, len(CELL_FEATURES)))
    k = 0
    for i in range(gh):
        for j in range(gw):
            cell = x[:, re[i]:re[i + 1], ce[j]:ce[j + 1]]
            flat = cell.reshape(b, -1)
            mu = flat.mean(axis=1)
            out[:, k, 0] = mu
            out[:, k, 1] = np.sqrt(((flat - mu[:, None]) ** 2).mean(axis=1))
            if cell.shape[2] > 1:
                out[:, k, 2] = np.abs(np.diff(cell, axis=2)).reshape(b, -1).mean(axis=1)
            else:
                out[:, k, 2] = 0.0
            if cell.shape[1] > 1:
                out[:, k, 3] = np.abs(np.diff(cell, axis=1)).reshape(b, -1).mean(axis=1)
            else:
                out[:, k, 3] = 0.0
            out[:, k, 4] = flat.min(axis=1)
            out[:, k, 5] = flat.max(axis=1)
            k += 1
    return out


def baseline_embed(patch: ImageTensor) -> FeatureSet:
    return FeatureSet(embed_batch(patch.gray())[0], source=f"patch {patch.height}x{patch.width}")


def fit_gaussian_batch(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and shrunk covariance for a stack of sample sets of shape (B, N, d).

    Uses the N denominator. With fewer samples than dimensions only the
    diagonal is kept.
    """
    x = np.asarray(samples, dtype=np.float64)
    _, n, d = x.shape
    mu = x.mean(axis=1)
    xc = x - mu[:, None, :]
    if n < d:
        cov = np.zeros((x.shape[0], d, d))
        idx = np.arange(d)
        cov[:, idx, idx] = (xc ** 2).mean(axis=1)
    else:
        cov = np.einsum("bni,bnj->bij", xc, xc) / n
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    cov += SHRINKAGE * np.eye(d)
    return mu, cov


def fit_gaussian(fs: FeatureSet) -> GaussianFit:
    mu, cov = fit_gaussian_batch(fs.vectors[None])
    return GaussianFit(mu[0], cov[0])


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a (stack of) symmetric PSD matrices.

    Negative eigenvalues from rounding are clamped to zero.
    """
    m = np.asarray(m, dtype=np.float64)
    w, v = np.linalg.eigh(0.5 * (m + np.swapaxes(m, -1, -2)))
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


def _trace_sqrt_product(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    ra = sqrtm_psd(ca)
    inner = ra @ cb @ ra
    w = np.linalg.eigvalsh(0.5 * (inner + np.swapaxes(inner, -1, -2)))
    return np.sqrt(np.clip(w, 0.0, None)).sum(axis=-1)


def frechet_batch(mu_a, cov_a, mu_b, cov_b) -> np.ndarray:
    """Frechet distance between paired Gaussians, shape (B,).

    The cross term is averaged over both argument orders so the result is
    exactly symmetric; identical Gaussians give exactly zero.
    """
    mu_a, mu_b = np.asarray(mu_a, np.float64), np.asarray(mu_b, np.float64)
    cov_a, cov_b = np.asarray(cov_a, np.float64), np.asarray(cov_b, np.float64)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape:
        raise ValueError(f"dimension mismatch: {mu_a.shape} vs {mu_b.shape}")
    for arr in (mu_a, mu_b, cov_a, cov_b):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite Gaussian parameters")
    diff = mu_a - mu_b
    mean_term = (diff * diff).sum(axis=-1)
    cross = 0.5 * (_trace_sqrt_product(cov_a, cov_b) + _trace_sqrt_product(cov_b, cov_a))
    tr = np.trace(cov_a, axis1=-2, axis2=-1) + np.trace(cov_b, axis1=-2, axis2=-1)
    d = np.maximum(mean_term + tr - 2.0 * cross, 0.0)
    same = np.all(mu_a == mu_b, axis=-1) & np.all(cov_a == cov_b, axis=(-2, -1))
    return np.where(same, 0.0, d)


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    return float(frechet_batch(a.mean[None], a.covariance[None], b.mean[None], b.covariance[None])[0])


def frechet_between_patches(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Frechet distance between baseline embeddings of two gray patch stacks."""
    mua, ca = fit_gaussian_batch(embed_batch(pa))
    mub, cb = fit_gaussian_batch(embed_batch(pb))
    return frechet_batch(mua, ca, mub, cb)


class BaselineEmbedder:
    """Handcrafted deterministic embedder used for patches and whole images."""

    mode = "baseline"

    def embed_patches(self, patches: np.ndarray) -> np.ndarray:
        return embed_batch(patches)

    def embed_image(self, image: ImageTensor) -> np.ndarray:
        return embed_batch(image.gray())[0]


class ExternalFeatureEmbedder(BaselineEmbedder):
    """Whole-image features read from ``<feature_dir>/<image-stem>.feat``.

    Patches still go through the baseline statistics, since externally
    computed features only exist for whole images.
    """

    mode = "external"

    def __init__(self, feature_dir):
        self.feature_dir = Path(feature_dir)

    def embed_image(self, image: ImageTensor) -> np.ndarray:
        src = image.meta.get("path")
        if not src:
            raise ValueError("external feature mode needs images loaded from files")
        path = self.feature_dir / f"{Path(src).stem}.feat"
        if not path.exists():
            raise FileNotFoundError(f"missing external feature file {path}")
        return np.atleast_2d(read_native(path)).astype(np.float64)


def make_embedder(mode: str = "baseline", feature_dir: Optional[str] = None):
    if mode == "baseline":
        return BaselineEmbedder()
    if mode == "external":
        if feature_dir is None:
            raise ValueError("external embedder mode needs a feature_dir")
        return ExternalFeatureEmbedder(feature_dir)
    raise ValueError(f"unknown embedder mode {mode!r}")


def perceptual_mse(a: ImageTensor, b: ImageTensor, embedder=None) -> float:
    """MSE between whole-image embeddings, flattened in cell order."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    embedder = embedder or BaselineEmbedder()
    fa, fb = embedder.embed_image(a), embedder.embed_image(b)
    if fa.shape != fb.shape:
        raise ValueError(f"feature shape mismatch: {fa.shape} vs {fb.shape}")
    return mse(fa.ravel(), fb.ravel())
