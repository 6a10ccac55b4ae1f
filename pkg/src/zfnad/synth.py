"""Seeded synthetic circuit-board scenes with controlled normal variation and labeled defects.

A scene is a dark board carrying a grid of bright rectangular components and a
textured "barcode" zone whose content changes from image to image. Normal
images jitter component positions by a sub-pixel Gaussian offset and add
pixel noise; abnormal images get one defect: a shifted component, a missing
component, or a bright bridge between two neighbours.

All intensities are snapped to the 16-bit PNG grid so in-memory images and
their PNG files are identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from zfnad.recon import MedianReconstructor, write_manifest
from zfnad.tensor import ImageTensor, quantize16, save_png

BACKGROUND = 0.15
COMPONENT = 0.75
BRIDGE = 0.9
ZONE_LOW, ZONE_HIGH = 0.3, 0.7
DEFECT_KINDS = ("shift", "missing", "bridge")
GROUPS = {"train": 1, "mask": 2, "test_n": 3, "test_a": 4}


@dataclass(frozen=True)
class SynthSpec:
    image_size: int = 64
    component_grid: tuple = (3, 3)
    component_shape: tuple = (8, 10)
    pitch: tuple = (16, 16)
    origin: tuple = (6, 6)
    jitter_sigma: float = 0.3
    noise_sigma: float = 0.01
    high_variation_zone: Optional[tuple] = (50, 50, 62, 62)  # top, left, bottom, right
    zone_block: int = 2
    defect_kinds: tuple = DEFECT_KINDS
    defect_magnitude: float = 3.0
    train_normals: int = 15
    mask_normals: int = 30
    test_normals: int = 20
    test_abnormals: int = 10
    seed: int = 0

    def __post_init__(self):
        s = self.image_size
        if s < 16:
            raise ValueError("image_size must be >= 16")
        if self.mask_normals < 2:
            raise ValueError("mask_normals must be >= 2")
        if self.train_normals < 1:
            raise ValueError("train_normals must be >= 1")
        if self.test_abnormals and not self.defect_kinds:
            raise ValueError("abnormal images need at least one defect kind")
        for k in self.defect_kinds:
            if k not in DEFECT_KINDS:
                raise ValueError(f"unknown defect kind {k!r}")
        if self.jitter_sigma < 0 or self.noise_sigma < 0 or self.defect_magnitude <= 0:
            raise ValueError("sigmas must be >= 0 and defect_magnitude > 0")
        z = self.high_variation_zone
        if z is not None and not (0 <= z[0] < z[2] <= s and 0 <= z[1] < z[3] <= s):
            raise ValueError(f"zone {z} lies outside the {s}px image")
        for top, left in self.component_origins():
            h, w = self.component_shape
            if top < 0 or left < 0 or top + h > s or left + w > s:
                raise ValueError("component grid does not fit in the image")
        if len(self.component_origins()) < 2:
            raise ValueError("scene needs at least two components")

    def component_origins(self) -> list[tuple[int, int]]:
        """Nominal top-left corners, skipping components that touch the zone."""
        out = []
        h, w = self.component_shape
        z = self.high_variation_zone
        for i in range(self.component_grid[0]):
            for j in range(self.component_grid[1]):
                top = self.origin[0] + i * self.pitch[0]
                left = self.origin[1] + j * self.pitch[1]
                if z is not None and top < z[2] + 2 and z[0] - 2 < top + h and left < z[3] + 2 and z[1] - 2 < left + w:
                    continue
                out.append((top, left))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("component_grid", "component_shape", "pitch", "origin", "defect_kinds"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("high_variation_zone") is not None:
            d["high_variation_zone"] = tuple(d["high_variation_zone"])
        return cls(**d)


# Desk-scale presets. Magnitudes are in pixels for shift/bridge defects.
WIDE_MARGIN = SynthSpec(jitter_sigma=0.3, noise_sigma=0.01, defect_magnitude=3.0)
NARROW_MARGIN = SynthSpec(jitter_sigma=1.0, noise_sigma=0.01, defect_magnitude=1.5, defect_kinds=("shift",))
DEFAULT_SPEC = WIDE_MARGIN


@dataclass
class GroundTruth:
    image_id: str
    boxes: list = field(default_factory=list)  # (top, left, bottom, right), exclusive ends
    kinds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "boxes": [list(b) for b in self.boxes], "kinds": list(self.kinds)}


@dataclass
class SynthDataset:
    spec: SynthSpec
    train: list
    mask: list
    test: list
    labels: list
    truth: dict

    @property
    def test_ids(self) -> list[str]:
        return [t.meta["image_id"] for t in self.test]


def _coverage(lo: float, hi: float, n: int) -> np.ndarray:
    idx = np.arange(n)
    return np.clip(np.minimum(idx + 1, hi) - np.maximum(idx, lo), 0.0, 1.0)


def _draw_rect(img: np.ndarray, top: float, left: float, h: float, w: float, value: float) -> None:
    """Anti-aliased rectangle: pixels move toward ``value`` by their area coverage."""
    cov = np.outer(_coverage(top, top + h, img.shape[0]), _coverage(left, left + w, img.shape[1]))
    np.copyto(img, img * (1 - cov) + value * cov)


def _outer_box(top, left, h, w, size) -> tuple[int, int, int, int]:
    t, l = int(np.floor(top)), int(np.floor(left))
    b, r = int(np.ceil(top + h)), int(np.ceil(left + w))
    return (max(t, 0), max(l, 0), min(b, size), min(r, size))


def _union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _render(spec: SynthSpec, rng: np.random.Generator, defect: Optional[str]):
    s = spec.image_size
    h, w = spec.component_shape
    img = np.full((s, s), BACKGROUND)
    origins = spec.component_origins()
    offsets = rng.normal(0.0, spec.jitter_sigma, size=(len(origins), 2)) if spec.jitter_sigma > 0 \
        else np.zeros((len(origins), 2))
    placed = [(t + dy, l + dx) for (t, l), (dy, dx) in zip(origins, offsets)]
    boxes = []
    target = None
    if defect is not None:
        if defect == "bridge":
            pairs = [(i, j) for i, (t0, l0) in enumerate(origins) for j, (t1, l1) in enumerate(origins)
                     if t1 == t0 and l1 > l0 and l1 - l0 == spec.pitch[1]]
            if not pairs:
                raise ValueError("bridge defect needs two horizontally adjacent components")
            target = pairs[int(rng.integers(len(pairs)))]
        else:
            target = int(rng.integers(len(placed)))
    for i, (t, l) in enumerate(placed):
        if defect == "missing" and i == target:
            boxes.append(_outer_box(t, l, h, w, s))
            continue
        if defect == "shift" and i == target:
            dr, dc = [(-1, 0), (1, 0), (0, -1), (0, 1)][int(rng.integers(4))]
            nt, nl = t + dr * spec.defect_magnitude, l + dc * spec.defect_magnitude
            nt, nl = float(np.clip(nt, 0, s - h)), float(np.clip(nl, 0, s - w))
            _draw_rect(img, nt, nl, h, w, COMPONENT)
            boxes.append(_union(_outer_box(t, l, h, w, s), _outer_box(nt, nl, h, w, s)))
            continue
        _draw_rect(img, t, l, h, w, COMPONENT)
    if defect == "bridge":
        a, b = target
        (ta, la), (tb, lb) = placed[a], placed[b]
        left = la + w
        right = lb
        thick = spec.defect_magnitude
        mid = 0.5 * (ta + tb) + h / 2.0
        top = mid - thick / 2.0
        _draw_rect(img, top, left, thick, right - left, BRIDGE)
        boxes.append(_outer_box(top, left, thick, right - left, s))
    z = spec.high_variation_zone
    if z is not None:
        blk = spec.zone_block
        zh, zw = z[2] - z[0], z[3] - z[1]
        bits = rng.integers(0, 2, size=(-(-zh // blk), -(-zw // blk)))
        tex = np.where(np.kron(bits, np.ones((blk, blk)))[:zh, :zw] > 0, ZONE_HIGH, ZONE_LOW)
        img[z[0]:z[2], z[1]:z[3]] = tex
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return quantize16(img), boxes


def _image(spec: SynthSpec, group: str, index: int, defect: Optional[str]):
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, GROUPS[group], index]))
    data, boxes = _render(spec, rng, defect)
    image_id = f"{group}_{index:04d}"
    return ImageTensor(data, {"image_id": image_id}), GroundTruth(image_id, boxes, [defect] * len(boxes) if defect else [])


def generate(spec: SynthSpec) -> SynthDataset:
    """Deterministic dataset: train normals, mask normals, then normal and abnormal test images."""
    train = [_image(spec, "train", i, None)[0] for i in range(spec.train_normals)]
    mask = [_image(spec, "mask", i, None)[0] for i in range(spec.mask_normals)]
    test, labels, truth = [], [], {}
    for i in range(spec.test_normals):
        img, gt = _image(spec, "test_n", i, None)
        test.append(img)
        labels.append(0)
        truth[gt.image_id] = gt
    for i in range(spec.test_abnormals):
        kind = spec.defect_kinds[i % len(spec.defect_kinds)]
        img, gt = _image(spec, "test_a", i, kind)
        test.append(img)
        labels.append(1)
        truth[gt.image_id] = gt
    return SynthDataset(spec, train, mask, test, labels, truth)


def write_dataset(ds: SynthDataset, outdir) -> dict:
    """Write PNGs, baseline reconstructions, recon manifests and ground truth.

    Returns the written paths keyed by role.
    """
    out = Path(outdir)
    for sub in ("train", "mask", "test", "recon"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    recon = MedianReconstructor(ds.train)
    rec_path = out / "recon" / "golden.png"
    save_png(rec_path, recon.golden)
    for img in ds.train:
        save_png(out / "train" / f"{img.meta['image_id']}.png", img)
    rows_mask, rows_test = [], []
    for img in ds.mask:
        p = out / "mask" / f"{img.meta['image_id']}.png"
        save_png(p, img)
        rows_mask.append({"original": f"mask/{p.name}", "reconstruction": "recon/golden.png", "label": 0})
    for img, label in zip(ds.test, ds.labels):
        p = out / "test" / f"{img.meta['image_id']}.png"
        save_png(p, img)
        rows_test.append({"original": f"test/{p.name}", "reconstruction": "recon/golden.png", "label": label})
    write_manifest(out / "mask_manifest.csv", rows_mask)
    write_manifest(out / "test_manifest.csv", rows_test)
    (out / "ground_truth.json").write_text(json.dumps(
        {"spec": ds.spec.to_dict(), "images": [ds.truth[k].to_dict() for k in sorted(ds.truth)]}, indent=2) + "\n")
    return {
        "train_dir": out / "train",
        "mask_manifest": out / "mask_manifest.csv",
        "test_manifest": out / "test_manifest.csv",
        "ground_truth": out / "ground_truth.json",
    }
