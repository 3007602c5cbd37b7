"""Pseudo-anomaly synthesis: masks plus local appearance edits.

Stand-in for generative or cut-paste anomaly sources: it fabricates defect
candidates from normal images by drawing a small mask and rewriting exactly
the pixels under it. Every change is guaranteed to survive 8-bit PNG
quantization, so the written mask is exactly the set of changed pixels.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _shapes
from ._util import derive_seed
from .core import (
    LABEL_ANOMALOUS,
    ROLE_TEST,
    Image,
    PixelMask,
    SampleRecord,
)
from .dataset_io import MASK_SUFFIX, read_image, read_mask, write_image, write_mask

MASK_KINDS = ("blob", "scratch")
FILL_KINDS = ("texture_shuffle", "intensity_shift", "noise_fill")

PSEUDO_CLASS = "pseudo"
_SHIFT = 0.3


@dataclass(frozen=True)
class PseudoSpec:
    """Recipe for a pseudo-anomaly set derived from normal source images."""

    seed: int
    count: int = 40
    mask_kind: str = "blob"
    area_fraction_range: tuple[float, float] = (0.004, 0.03)
    fill_kind: str = "texture_shuffle"
    source: tuple[SampleRecord, ...] = ()
    source_root: str = "."

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"pseudo set needs at least 2 samples, got {self.count}")
        if self.mask_kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind: {self.mask_kind!r}")
        if self.fill_kind not in FILL_KINDS:
            raise ValueError(f"unknown fill kind: {self.fill_kind!r}")


def generate_mask(
    seed: int, width: int, height: int, kind: str, area_range: tuple[float, float]
) -> PixelMask:
    """Draw one defect-shaped mask whose ones count lands inside the
    pixel-count window implied by ``area_range``."""
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind: {kind!r} (expected one of {MASK_KINDS})")
    rng = np.random.default_rng(seed)
    return PixelMask.from_array(_shapes.defect_mask(rng, width, height, kind, area_range))


def _levels(values: np.ndarray) -> np.ndarray:
    # 8-bit levels as written by dataset_io.write_image.
    return np.floor(values * 255.0).astype(np.int64)


def _shuffle_fill(rng, flat: np.ndarray, inside: np.ndarray, outside: np.ndarray) -> np.ndarray:
    """Replace each masked pixel with a distinct off-mask pixel of a
    different 8-bit value. Donors are used at most once, so the filled
    values form a sub-multiset of the off-mask values."""
    if outside.size < inside.size:
        raise ValueError("mask covers more than half the image; nothing to sample from")
    levels = _levels(flat)
    pool = deque(rng.permutation(outside).tolist())
    filled = np.empty((inside.size, flat.shape[1]), dtype=np.float64)
    for row, target in enumerate(inside):
        for _ in range(len(pool)):
            donor = pool.popleft()
            if np.any(levels[donor] != levels[target]):
                filled[row] = flat[donor]
                break
            pool.append(donor)
        else:
            raise ValueError("image too uniform for texture_shuffle fill")
    return filled


def _shift_fill(flat: np.ndarray, inside: np.ndarray) -> np.ndarray:
    region = flat[inside]
    sign = 1.0 if region.mean() < 0.5 else -1.0
    shifted = np.clip(region + sign * _SHIFT, 0.0, 1.0)
    # A pixel pinned against the clamp may come back unchanged; push those
    # the other way instead.
    stuck = np.all(_levels(shifted) == _levels(region), axis=1)
    if stuck.any():
        shifted[stuck] = np.clip(region[stuck] - sign * _SHIFT, 0.0, 1.0)
    return shifted


def _noise_fill(rng, flat: np.ndarray, inside: np.ndarray) -> np.ndarray:
    region = flat[inside]
    noise = rng.random(region.shape)
    same = np.all(_levels(noise) == _levels(region), axis=1)
    if same.any():
        noise[same] = np.mod(region[same] + 0.5, 1.0)
    return noise


def apply_pseudo(img: Image, mask: PixelMask, fill_kind: str, seed: int) -> Image:
    """Rewrite exactly the masked pixels of ``img``.

    Off-mask pixels are returned bit-identical; every on-mask pixel changes
    by at least one 8-bit level. Output intensities stay in [0, 1].
    """
    if fill_kind not in FILL_KINDS:
        raise ValueError(f"unknown fill kind: {fill_kind!r} (expected one of {FILL_KINDS})")
    if (img.width, img.height) != (mask.width, mask.height):
        raise ValueError(
            f"dimension mismatch: image {img.width}x{img.height} "
            f"vs mask {mask.width}x{mask.height}"
        )
    flat = img.pixels().reshape(-1, img.channels)
    inside = np.flatnonzero(mask.data == 1)
    if inside.size == 0:
        return Image.from_array(img.pixels())
    outside = np.flatnonzero(mask.data == 0)
    rng = np.random.default_rng(seed)
    if fill_kind == "texture_shuffle":
        filled = _shuffle_fill(rng, flat, inside, outside)
    elif fill_kind == "intensity_shift":
        filled = _shift_fill(flat, inside)
    else:
        filled = _noise_fill(rng, flat, inside)
    out = flat.copy()
    out[inside] = filled
    return Image.from_array(out.reshape(img.height, img.width, img.channels))


def generate_pseudo_set(spec: PseudoSpec, out) -> list[SampleRecord]:
    """Write ``spec.count`` pseudo-anomalous images with exact masks.

    Source images are cycled in order. Returned records carry paths relative
    to ``out`` and are flagged as specification-change targets.
    """
    if not spec.source:
        raise ValueError("pseudo spec has no source samples")
    out = Path(out)
    records: list[SampleRecord] = []
    for i in range(spec.count):
        src = spec.source[i % len(spec.source)]
        img = read_image(Path(spec.source_root) / src.image_path)
        mask = generate_mask(
            derive_seed(spec.seed, i, "mask"),
            img.width,
            img.height,
            spec.mask_kind,
            spec.area_fraction_range,
        )
        aug = apply_pseudo(img, mask, spec.fill_kind, derive_seed(spec.seed, i, "fill"))
        name = f"{i:03d}"
        image_rel = f"test/{PSEUDO_CLASS}/{name}.png"
        mask_rel = f"ground_truth/{PSEUDO_CLASS}/{name}{MASK_SUFFIX}.png"
        write_image(aug, out / image_rel)
        write_mask(mask, out / mask_rel)
        records.append(
            SampleRecord(
                id=f"test/{PSEUDO_CLASS}/{name}",
                image_path=image_rel,
                mask_path=mask_rel,
                label=LABEL_ANOMALOUS,
                role=ROLE_TEST,
                defect_class=PSEUDO_CLASS,
                is_target=True,
            )
        )
    return records


def load_pseudo_set(root) -> list[SampleRecord]:
    """Index a previously generated pseudo set rooted at ``root``."""
    root = Path(root)
    image_dir = root / "test" / PSEUDO_CLASS
    paths = sorted(image_dir.glob("*.png"))
    if not paths:
        raise ValueError(f"no pseudo set at {root}")
    records = []
    for path in paths:
        mask_path = root / "ground_truth" / PSEUDO_CLASS / f"{path.stem}{MASK_SUFFIX}.png"
        if not mask_path.is_file():
            raise FileNotFoundError(f"missing pseudo mask for {path}: expected {mask_path}")
        records.append(
            SampleRecord(
                id=f"test/{PSEUDO_CLASS}/{path.stem}",
                image_path=path.relative_to(root).as_posix(),
                mask_path=mask_path.relative_to(root).as_posix(),
                label=LABEL_ANOMALOUS,
                role=ROLE_TEST,
                defect_class=PSEUDO_CLASS,
                is_target=True,
            )
        )
    return records


def rebase_records(records, from_root, to_root) -> list[SampleRecord]:
    """Re-express record paths (relative to ``from_root``) relative to
    ``to_root``. Needed when a pseudo set is folded into a dataset tree."""
    import os

    from_root, to_root = Path(from_root), Path(to_root)

    def rebase(p):
        return None if p is None else Path(os.path.relpath(from_root / p, to_root)).as_posix()

    return [
        replace(s, image_path=rebase(s.image_path), mask_path=rebase(s.mask_path))
        for s in records
    ]
