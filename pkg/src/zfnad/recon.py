"""Reconstruction inputs: baseline reconstructor, manifest ingestion, loss arithmetic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from zfnad.tensor import ImageTensor, load_image, mse

DELTA = 1e-6  # stabilizer in the adaptive GAN weight

MANIFEST_COLUMNS = (
    "original",
    "reconstruction",
    "label",
    "quantization_loss",
    "disc_loss_original",
    "disc_loss_reconstruction",
    "perceptual_loss",
)
SIDECAR_FIELDS = MANIFEST_COLUMNS[3:]


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SidecarLosses:
    quantization_loss: Optional[float] = None
    disc_loss_original: Optional[float] = None
    disc_loss_reconstruction: Optional[float] = None
    perceptual_loss: Optional[float] = None

    def __post_init__(self):
        for name in SIDECAR_FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            if name in ("quantization_loss", "perceptual_loss") and v < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class ReconPair:
    original: ImageTensor
    reconstruction: ImageTensor
    label: Optional[int] = None
    image_id: str = ""
    sidecar: SidecarLosses = field(default_factory=SidecarLosses)

    def __post_init__(self):
        if self.original.shape != self.reconstruction.shape:
            raise ValueError(
                f"pair {self.image_id!r}: original {self.original.shape} "
                f"!= reconstruction {self.reconstruction.shape}"
            )
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"pair {self.image_id!r}: label must be 0 or 1")


@dataclass(frozen=True)
class LossInputs:
    encoded: np.ndarray
    quantized: np.ndarray
    disc_score_original: float = 0.5
    disc_score_reconstruction: float = 0.5
    grad_norm_rec: float = 0.0
    grad_norm_gan: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.encoded, dtype=np.float64).ravel()
        q = np.asarray(self.quantized, dtype=np.float64).ravel()
        if e.shape != q.shape:
            raise ValueError(f"encoded/quantized length mismatch: {e.size} vs {q.size}")
        object.__setattr__(self, "encoded", e)
        object.__setattr__(self, "quantized", q)


def baseline_reconstruct(train_normals: Sequence[ImageTensor], image: ImageTensor) -> ImageTensor:
    """Per-pixel, per-channel median of the registered normal training images."""
    if len(train_normals) == 0:
        raise ValueError("baseline reconstruction needs at least one normal image")
    for i, t in enumerate(train_normals):
        if t.shape != image.shape:
            raise ValueError(f"training image {i} has shape {t.shape}, input has {image.shape}")
    stack = np.stack([t.data for t in train_normals])
    med = np.median(stack, axis=0)
    return ImageTensor(med.astype(np.float32), {"reconstructor": "median", "n_train": len(train_normals)})


class MedianReconstructor:
    """Fitted form of :func:`baseline_reconstruct`; the median is computed once."""

    def __init__(self, train_normals: Sequence[ImageTensor]):
        if len(train_normals) == 0:
            raise ValueError("baseline reconstruction needs at least one normal image")
        self.golden = baseline_reconstruct(train_normals, train_normals[0])

    def __call__(self, image: ImageTensor) -> ImageTensor:
        if image.shape != self.golden.shape:
            raise ValueError(f"input shape {image.shape} != training shape {self.golden.shape}")
        return self.golden


def squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return math.fsum((d * d).tolist())


def vq_loss(li: LossInputs, pair: ReconPair) -> float:
    """Reconstruction MSE plus codebook and commitment distances.

    Stop-gradients have no numerical effect outside training, so both latent
    terms evaluate to the same squared distance.
    """
    return vq_loss_from_mse(mse(pair.original, pair.reconstruction), li)


def vq_loss_from_mse(reconstruction_mse: float, li: LossInputs) -> float:
    """Same as :func:`vq_loss` when only the pixel MSE of the pair is known."""
    if reconstruction_mse < 0:
        raise ValueError("reconstruction MSE must be >= 0")
    codebook = squared_distance(li.encoded, li.quantized)
    commitment = squared_distance(li.quantized, li.encoded)
    return reconstruction_mse + codebook + commitment


def gan_loss(disc_score_original: float, disc_score_reconstruction: float) -> float:
    """log D(x) + log(1 - D(x_hat)) with natural logarithms."""
    for name, v in (("disc_score_original", disc_score_original),
                    ("disc_score_reconstruction", disc_score_reconstruction)):
        if not (0.0 < v < 1.0):
            raise ValueError(f"{name} must lie in the open interval (0, 1), got {v}")
    return math.log(disc_score_original) + math.log1p(-disc_score_reconstruction)


def adaptive_lambda(grad_norm_rec: float, grad_norm_gan: float) -> float:
    if grad_norm_rec < 0 or grad_norm_gan < 0:
        raise ValueError("gradient norms must be >= 0")
    return grad_norm_rec / (grad_norm_gan + DELTA)


def total_loss(li: LossInputs, pair: ReconPair) -> dict[str, float]:
    """All terms of the VQGAN objective at a single evaluation point."""
    lam = adaptive_lambda(li.grad_norm_rec, li.grad_norm_gan)
    vq = vq_loss(li, pair)
    gan = gan_loss(li.disc_score_original, li.disc_score_reconstruction)
    return {"vq_loss": vq, "gan_loss": gan, "lambda": lam, "total": vq + lam * gan}


def _parse_float(value: str, column: str, row: int) -> Optional[float]:
    value = (value or "").strip()
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise ManifestError(f"row {row}: column {column!r} is not a number: {value!r}") from None


def read_manifest_rows(manifest) -> list[dict]:
    manifest = Path(manifest)
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS[:3] if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(f"{manifest}: missing columns {missing}")
        return list(reader)


def ingest_pairs(manifest) -> list[ReconPair]:
    """Load and validate the (original, reconstruction, label, losses) rows of a manifest.

    Relative paths resolve against the manifest's directory. Row numbers in
    error messages count the header as row 1.
    """
    manifest = Path(manifest)
    base = manifest.parent
    pairs = []
    for i, row in enumerate(read_manifest_rows(manifest), start=2):
        label_raw = (row.get("label") or "").strip()
        if label_raw not in ("0", "1"):
            raise ManifestError(f"row {i}: label must be 0 or 1, got {label_raw!r}")
        paths = []
        for col in ("original", "reconstruction"):
            p = Path(row[col].strip())
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ManifestError(f"row {i}: missing file {p}")
            paths.append(p)
        sidecar = SidecarLosses(**{c: _parse_float(row.get(c, ""), c, i) for c in SIDECAR_FIELDS})
        orig, rec = load_image(paths[0]), load_image(paths[1])
        if orig.shape != rec.shape:
            raise ManifestError(f"row {i}: dimension mismatch {orig.shape} vs {rec.shape} ({paths[0].name})")
        pairs.append(ReconPair(orig, rec, int(label_raw), image_id=paths[0].stem, sidecar=sidecar))
    return pairs


def write_manifest(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: ("" if row.get(c) is None else row.get(c)) for c in MANIFEST_COLUMNS})
