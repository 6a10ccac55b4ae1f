"""Image tensors, file IO, difference maps and scalar aggregation."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

MAGIC = b"ZFNT"
FORMAT_VERSION = 1
DTYPE_F32 = 0
NATIVE_SUFFIXES = (".zfnt", ".feat")


class TensorFormatError(ValueError):
    """Raised for malformed native tensor files or invalid image contents."""


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """H x W x C float32 image with values in [0, 1].

    ``data`` is stored read-only; build a new tensor instead of mutating.
    """

    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise TensorFormatError(f"expected HxWxC array, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise TensorFormatError(f"unsupported channel count {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise TensorFormatError("empty image")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise TensorFormatError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise TensorFormatError("image values outside [0, 1]")
        if arr is self.data or np.shares_memory(arr, np.asarray(self.data)):
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def gray(self) -> np.ndarray:
        """Channel-mean intensity as a float64 H x W array."""
        if self.channels == 1:
            return self.data[:, :, 0].astype(np.float64)
        return self.data.astype(np.float64).sum(axis=2) / self.channels

    def crop(self, top: int, left: int, height: int, width: int) -> "ImageTensor":
        return ImageTensor(self.data[top:top + height, left:left + width, :], dict(self.meta))


@dataclass(frozen=True, eq=False)
class DiffMap:
    """Channel-reduced, non-negative per-pixel difference."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"DiffMap must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or (v.size and v.min() < 0):
            raise ValueError("DiffMap values must be finite and >= 0")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Aggregates:
    sum: float
    max: float
    min: float
    mean: float
    q1: float
    median: float
    q3: float

    FIELDS = ("sum", "max", "min", "mean", "q1", "median", "q3")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}


def _quantile_sorted(s: np.ndarray, p: float) -> float:
    pos = (len(s) - 1) * p
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    return float(s[lo] + (s[hi] - s[lo]) * frac)


def aggregate(values: Iterable[float]) -> Aggregates:
    """Sum, max, min, mean and quartiles of a non-empty finite sequence.

    Quartiles interpolate linearly at position (n - 1) * p of the sorted values.
    The sum is exactly rounded (``math.fsum``) so the result does not depend on
    input order.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("aggregate of an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("aggregate input contains non-finite values")
    s = np.sort(arr)
    total = math.fsum(s.tolist())
    return Aggregates(
        sum=total,
        max=float(s[-1]),
        min=float(s[0]),
        mean=total / s.size,
        q1=_quantile_sorted(s, 0.25),
        median=_quantile_sorted(s, 0.5),
        q3=_quantile_sorted(s, 0.75),
    )


def _as_array(x) -> np.ndarray:
    if isinstance(x, ImageTensor):
        return x.data.astype(np.float64)
    if isinstance(x, DiffMap):
        return x.values.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def mse(a, b) -> float:
    """Mean squared element difference of two images or vectors."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("mse of empty input")
    d = (x - y).ravel()
    return math.fsum((d * d).tolist()) / d.size


def abs_diff(a: ImageTensor, b: ImageTensor) -> DiffMap:
    """Per-pixel channel-mean absolute difference."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
    if a.channels == 1:
        return DiffMap(d[:, :, 0])
    return DiffMap(d.sum(axis=2) / a.channels)


# --- native tensor format -------------------------------------------------

def write_native(path, array: np.ndarray) -> None:
    """Write an array as ZFNT: magic, u16 version, u8 dtype, u8 ndim, u32 dims, f32 LE payload."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<HBB", FORMAT_VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def read_native(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: not a ZFNT tensor file")
    version, dtype, ndim = struct.unpack_from("<HBB", raw, 4)
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
    off = 8 + 4 * ndim
    if len(raw) < off:
        raise TensorFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = int(np.prod(dims)) if ndim else 1
    if len(raw) - off != 4 * count:
        raise TensorFormatError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(raw, dtype="<f4", offset=off).reshape(dims).astype(np.float32)


def save_tensor(path, image: ImageTensor) -> None:
    write_native(path, image.data)


def save_png(path, image: ImageTensor, bits: int = 16) -> None:
    """Save as PNG. 16-bit output is lossless for values on the k/65535 grid."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    if image.channels == 3 and bits == 16:
        raise ValueError("16-bit PNG output is supported for gray images only")
    scale = 255.0 if bits == 8 else 65535.0
    q = np.rint(image.data.astype(np.float64) * scale)
    if image.channels == 1:
        q = q[:, :, 0]
        if bits == 8:
            img = Image.fromarray(q.astype(np.uint8), mode="L")
        else:
            img = Image.fromarray(q.astype(np.uint16))
    else:
        img = Image.fromarray(q.astype(np.uint8), mode="RGB")
    img.save(path, format="PNG")


def quantize16(values: np.ndarray) -> np.ndarray:
    """Snap [0, 1] values onto the grid produced by loading a 16-bit PNG."""
    q = np.rint(np.clip(values, 0.0, 1.0) * 65535.0)
    return (q / 65535.0).astype(np.float32)


def load_image(path) -> ImageTensor:
    """Load a PNG (8/16-bit gray or RGB) or a native ZFNT tensor file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() in NATIVE_SUFFIXES:
        return ImageTensor(read_native(path), {"path": str(path)})
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.array(img)
    except Exception as exc:  # PIL raises several unrelated exception types
        raise TensorFormatError(f"{path}: unreadable image ({exc})") from exc
    if mode in ("L", "RGB"):
        data = arr.astype(np.float64) / 255.0
    elif mode in ("I;16", "I;16B", "I;16L", "I"):
        data = arr.astype(np.float64) / 65535.0
    elif mode == "LA":
        data = arr[..., 0].astype(np.float64) / 255.0
    elif mode == "RGBA":
        data = arr[..., :3].astype(np.float64) / 255.0
    else:
        raise TensorFormatError(f"{path}: unsupported image mode {mode}")
    return ImageTensor(data.astype(np.float32), {"path": str(path)})
