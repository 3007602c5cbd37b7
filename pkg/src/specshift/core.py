"""Core raster and sample types shared by every other module.

Images, pixel masks, and anomaly maps are immutable value objects wrapping
flat row-major numpy buffers. Nothing here does I/O and nothing here runs an
algorithm beyond validation and thresholding, so the whole module is safe to
use from worker threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"
ROLE_TRAIN = "train"
ROLE_TEST = "test"

TARGET_AS_NORMAL = "as_normal"
TARGET_AS_ANOMALOUS = "as_anomalous"


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """Raster image with float64 intensities in [0, 1].

    ``data`` is stored flat in row-major (height, width, channel) order;
    construction never validates, so malformed instances can exist and be
    inspected. Use :func:`validate_image` before trusting one.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))

    @classmethod
    def from_array(cls, pixels) -> "Image":
        """Build from a (H, W) or (H, W, C) array."""
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError("expected a (H, W) or (H, W, C) pixel array")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    def pixels(self) -> np.ndarray:
        """Read-only (height, width, channels) view of the data."""
        return self.data.reshape(self.height, self.width, self.channels)


def validate_image(img: Image) -> tuple[bool, Optional[str]]:
    """Check every Image invariant.

    Returns (True, None) for a valid image, else (False, reason) naming the
    first violated invariant.
    """
    if img.width <= 0 or img.height <= 0:
        return False, "dimensions must be positive"
    if img.channels not in (1, 3):
        return False, f"channels must be 1 or 3, got {img.channels}"
    if img.data.size != img.width * img.height * img.channels:
        return False, (
            f"length mismatch: {img.data.size} values for "
            f"{img.width}x{img.height}x{img.channels}"
        )
    if not np.all(np.isfinite(img.data)):
        return False, "intensity not finite"
    if img.data.size and (img.data.min() < 0.0 or img.data.max() > 1.0):
        return False, "intensity out of range [0, 1]"
    return True, None


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Binary per-pixel annotation; values are exactly 0 or 1."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.data)
        if not np.isin(raw, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        if raw.size != self.width * self.height:
            raise ValueError(
                f"mask length mismatch: {raw.size} values for {self.width}x{self.height}"
            )
        object.__setattr__(self, "data", _frozen(raw, np.uint8))

    @classmethod
    def from_array(cls, values) -> "PixelMask":
        arr = np.asarray(values)
        if arr.ndim != 2:
            raise ValueError("expected a (H, W) mask array")
        h, w = arr.shape
        return cls(width=w, height=h, data=arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> "PixelMask":
        return cls(width=width, height=height, data=np.zeros(height * width, np.uint8))

    def grid(self) -> np.ndarray:
        """Read-only (height, width) view."""
        return self.data.reshape(self.height, self.width)

    def ones_count(self) -> int:
        return int(self.data.sum())

    def area_fraction(self) -> float:
        return self.ones_count() / self.data.size


@dataclass(frozen=True, eq=False)
class AnomalyMap:
    """Per-pixel anomaly scores.

    ``normalized`` asserts every score lies in [0, 1]; it is checked at
    construction so downstream thresholding can rely on it.
    """

    width: int
    height: int
    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _frozen(self.data, np.float64)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"map length mismatch: {arr.size} values for {self.width}x{self.height}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("anomaly scores must be finite")
        if self.normalized and arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("normalized map has scores outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, values, normalized: bool = False) -> "AnomalyMap":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a (H, W) score array")
        h, w = arr.shape
        return cls(width=w, height=h, data=arr, normalized=normalized)

    def grid(self) -> np.ndarray:
        """Read-only (height, width) view."""
        return self.data.reshape(self.height, self.width)


def binarize_map(amap: AnomalyMap, threshold: float) -> PixelMask:
    """Threshold a normalized map: pixels strictly above ``threshold`` become 1."""
    if not amap.normalized:
        raise ValueError("map must be normalized before thresholding")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return PixelMask.from_array((amap.grid() > threshold).astype(np.uint8))


@dataclass(frozen=True)
class SampleRecord:
    """One dataset sample as referenced by indexes and scenario manifests.

    ``image_path`` and ``mask_path`` are POSIX paths relative to the dataset
    class root. ``is_target`` marks samples whose ground-truth status is
    redefined by a specification change.
    """

    id: str
    image_path: str
    mask_path: Optional[str]
    label: str
    role: str
    defect_class: str
    is_target: bool = False

    def __post_init__(self):
        if self.label not in (LABEL_NORMAL, LABEL_ANOMALOUS):
            raise ValueError(f"unknown label: {self.label!r}")
        if self.role not in (ROLE_TRAIN, ROLE_TEST):
            raise ValueError(f"unknown role: {self.role!r}")

    def is_anomalous(self) -> bool:
        return self.label == LABEL_ANOMALOUS


@dataclass(frozen=True)
class ScoredSample:
    """An image-level score with its binary evaluation label (1 = anomalous)."""

    id: str
    score: float
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not np.isfinite(self.score):
            raise ValueError(f"score for {self.id!r} is not finite")


@dataclass(frozen=True)
class ScoreSet:
    """Immutable collection of scored samples with unique ids."""

    entries: tuple[ScoredSample, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample ids in score set")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_items(cls, items) -> "ScoreSet":
        """Build from an iterable of (id, score, label) triples."""
        return cls(tuple(ScoredSample(i, float(s), int(l)) for i, s, l in items))

    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def by_id(self) -> dict[str, ScoredSample]:
        return {e.id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)
