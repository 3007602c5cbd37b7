"""Dataset loading, PNG raster I/O, resizing, and synthetic data generation.

Datasets follow the standard industrial-inspection layout under a class root:

    <root>/<class>/train/good/*.png
    <root>/<class>/test/<defect>/*.png
    <root>/<class>/ground_truth/<defect>/*_mask.png

Sample order is always the lexicographic sort of relative POSIX paths, which
pins every downstream split and makes rebuilt artifacts byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import gaussian_filter

from . import _shapes
from ._util import derive_seed
from .core import (
    LABEL_ANOMALOUS,
    LABEL_NORMAL,
    ROLE_TEST,
    ROLE_TRAIN,
    AnomalyMap,
    Image,
    PixelMask,
    SampleRecord,
    validate_image,
)

GOOD_CLASS = "good"
MASK_SUFFIX = "_mask"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# Raster I/O


def read_image(path) -> Image:
    """Read a PNG into a float image in [0, 1].

    Grayscale files load as one channel; everything else is coerced to RGB.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.mode != "L":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    return Image.from_array(arr / 255.0)


def write_image(img: Image, path) -> None:
    """Write an image as 8-bit PNG; intensity v maps to level floor(v * 255)."""
    ok, reason = validate_image(img)
    if not ok:
        raise ValueError(f"refusing to write invalid image: {reason}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    levels = np.floor(img.pixels() * 255.0).astype(np.uint8)
    if img.channels == 1:
        PILImage.fromarray(levels[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(levels, mode="RGB").save(path)


def read_mask(path) -> PixelMask:
    """Read a PNG annotation; any nonzero level counts as mask membership."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode mask {path}: {exc}") from exc
    return PixelMask.from_array((arr != 0).astype(np.uint8))


def write_mask(mask: PixelMask, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray((mask.grid() * 255).astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------------------
# Resizing


def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    # Corner-aligned sampling: output i reads source i * (n_in-1) / (n_out-1).
    # A single-sample axis reads coordinate 0.
    if n_out == 1:
        return np.zeros(1)
    return np.linspace(0.0, float(n_in - 1), n_out)


def _resize_plane(plane: np.ndarray, width: int, height: int) -> np.ndarray:
    in_h, in_w = plane.shape
    xs = _axis_coords(in_w, width)
    ys = _axis_coords(in_h, height)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]
    # lerp(a, b, t) = a + t*(b - a) keeps constants exact.
    top = plane[np.ix_(y0, x0)]
    top = top + fx * (plane[np.ix_(y0, x1)] - top)
    bottom = plane[np.ix_(y1, x0)]
    bottom = bottom + fx * (plane[np.ix_(y1, x1)] - bottom)
    out = top + fy * (bottom - top)
    # Interpolation must never escape the input's value range.
    return np.clip(out, plane.min(), plane.max())


def resize_bilinear(amap: AnomalyMap, width: int, height: int) -> AnomalyMap:
    """Corner-aligned bilinear resampling of a score map."""
    if width < 1 or height < 1:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    out = _resize_plane(amap.grid(), width, height)
    return AnomalyMap.from_array(out, normalized=amap.normalized)


def resize_image(img: Image, width: int, height: int) -> Image:
    """Per-channel bilinear resize; [0, 1] range is preserved."""
    if width < 1 or height < 1:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    pix = img.pixels()
    planes = [_resize_plane(pix[:, :, c], width, height) for c in range(img.channels)]
    return Image.from_array(np.stack(planes, axis=-1))


def resize_mask(mask: PixelMask, width: int, height: int) -> PixelMask:
    """Resize a binary mask; any interpolated value above zero stays masked."""
    plane = _resize_plane(mask.grid().astype(np.float64), width, height)
    return PixelMask.from_array((plane > 0.0).astype(np.uint8))


# ---------------------------------------------------------------------------
# Dataset index


@dataclass(frozen=True)
class DefectClassStat:
    """Per-defect-class summary used for target selection."""

    name: str
    mean_area_fraction: float
    count: int


@dataclass(frozen=True)
class DatasetIndex:
    """Index of one dataset class directory.

    ``samples`` holds train and test records sorted by relative path; paths
    resolve against ``root`` (the class directory itself).
    """

    root: str
    class_name: str
    samples: tuple[SampleRecord, ...]
    defect_classes: tuple[DefectClassStat, ...]

    def train_records(self) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.samples if s.role == ROLE_TRAIN)

    def test_records(self) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.samples if s.role == ROLE_TEST)

    def by_defect_class(self, name: str) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.samples if s.defect_class == name)

    def resolve(self, record: SampleRecord) -> Path:
        return Path(self.root) / record.image_path


def _check_readable_png(path: Path) -> None:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_PNG_MAGIC))
    except OSError as exc:
        raise ValueError(f"unreadable image {path}: {exc}") from exc
    if magic != _PNG_MAGIC:
        raise ValueError(f"unreadable image {path}: not a PNG file")


def load_dataset(root, class_name: str) -> DatasetIndex:
    """Index one class directory of a dataset tree.

    Every anomalous test sample must have a ground-truth mask named
    ``<stem>_mask.png`` under ``ground_truth/<defect>/``.
    """
    class_dir = Path(root) / class_name
    if not class_dir.is_dir():
        raise FileNotFoundError(f"no class directory at {class_dir}")

    records: list[SampleRecord] = []
    train_dir = class_dir / "train" / GOOD_CLASS
    for path in sorted(train_dir.glob("*.png")):
        _check_readable_png(path)
        rel = path.relative_to(class_dir).as_posix()
        records.append(
            SampleRecord(
                id=rel[: -len(".png")],
                image_path=rel,
                mask_path=None,
                label=LABEL_NORMAL,
                role=ROLE_TRAIN,
                defect_class=GOOD_CLASS,
            )
        )

    test_dir = class_dir / "test"
    area_sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    if test_dir.is_dir():
        for defect_dir in sorted(d for d in test_dir.iterdir() if d.is_dir()):
            defect = defect_dir.name
            for path in sorted(defect_dir.glob("*.png")):
                _check_readable_png(path)
                rel = path.relative_to(class_dir).as_posix()
                if defect == GOOD_CLASS:
                    records.append(
                        SampleRecord(
                            id=rel[: -len(".png")],
                            image_path=rel,
                            mask_path=None,
                            label=LABEL_NORMAL,
                            role=ROLE_TEST,
                            defect_class=GOOD_CLASS,
                        )
                    )
                    continue
                mask_path = class_dir / "ground_truth" / defect / f"{path.stem}{MASK_SUFFIX}.png"
                if not mask_path.is_file():
                    raise FileNotFoundError(
                        f"missing ground-truth mask for {path}: expected {mask_path}"
                    )
                mask = read_mask(mask_path)
                area_sums[defect] = area_sums.get(defect, 0.0) + mask.area_fraction()
                counts[defect] = counts.get(defect, 0) + 1
                records.append(
                    SampleRecord(
                        id=rel[: -len(".png")],
                        image_path=rel,
                        mask_path=mask_path.relative_to(class_dir).as_posix(),
                        label=LABEL_ANOMALOUS,
                        role=ROLE_TEST,
                        defect_class=defect,
                    )
                )
    if not any(r.role == ROLE_TEST for r in records):
        raise ValueError(f"no test samples under {test_dir}")

    records.sort(key=lambda r: r.image_path)
    stats = tuple(
        DefectClassStat(name=d, mean_area_fraction=area_sums[d] / counts[d], count=counts[d])
        for d in sorted(counts)
    )
    return DatasetIndex(
        root=str(class_dir), class_name=class_name, samples=tuple(records), defect_classes=stats
    )


# ---------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class DefectSpec:
    """One synthetic defect class: shape kind, sample count, and area window."""

    name: str
    kind: str
    count: int
    area_fraction_range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in _shapes.KINDS:
            raise ValueError(f"unknown defect kind: {self.kind!r}")
        if self.count < 1:
            raise ValueError(f"defect count must be positive, got {self.count}")
        if self.name == GOOD_CLASS:
            raise ValueError(f"defect class may not be named {GOOD_CLASS!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic dataset class."""

    seed: int
    image_size: int = 256
    n_train_normal: int = 20
    n_test_normal: int = 10
    defect_specs: tuple[DefectSpec, ...] = ()
    class_name: str = "synthetic"

    def __post_init__(self):
        if self.image_size < 8:
            raise ValueError(f"image_size must be at least 8, got {self.image_size}")
        if self.n_train_normal < 1 or self.n_test_normal < 1:
            raise ValueError("normal sample counts must be positive")
        names = [d.name for d in self.defect_specs]
        if len(set(names)) != len(names):
            raise ValueError("defect class names must be unique")


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth procedural texture, (size, size, 3) in [0, 1]."""
    coarse = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 8.0)
    coarse /= coarse.std() + 1e-12
    medium = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 24.0)
    medium /= medium.std() + 1e-12
    fine = rng.standard_normal((size, size)) * 0.015
    base = 0.5 + 0.14 * coarse + 0.06 * medium + fine
    tint = rng.uniform(-0.03, 0.03, size=3)
    return np.clip(base[:, :, None] + tint[None, None, :], 0.0, 1.0)


# Each shape kind shifts the channels in its own direction so defect
# classes stay statistically distinct, and every direction keeps some
# luminance so defects stay visible in grayscale as well.
_KIND_PROFILES = {
    "spot": (1.0, 1.0, 1.0),
    "scratch": (1.0, -0.3, 0.6),
    "blob": (-0.2, 0.6, -1.0),
}


def _inject_defect(
    rng: np.random.Generator, pixels: np.ndarray, mask: np.ndarray, kind: str
) -> np.ndarray:
    """Write one coherent defect region: masked pixels shift together by
    0.25 to 0.45 along the kind's channel profile, clamped to [0, 1].
    Every masked pixel is guaranteed to change by at least one 8-bit level.
    """
    out = pixels.copy()
    sel = mask.astype(bool)
    region = out[sel]
    profile = np.array(_KIND_PROFILES[kind][: region.shape[1]])
    sign = 1.0 if region.mean() < 0.5 else -1.0
    delta = rng.uniform(0.25, 0.45) + rng.uniform(-0.03, 0.03, size=(region.shape[0], 1))
    shifted = np.clip(region + sign * delta * profile, 0.0, 1.0)
    # A pixel pinned against the clamp on every channel gets pushed the
    # other way so the mask stays exactly the set of changed pixels.
    stuck = np.all(
        np.floor(shifted * 255.0) == np.floor(region * 255.0), axis=1
    )
    if stuck.any():
        shifted[stuck] = np.clip(region[stuck] - sign * delta[stuck] * profile, 0.0, 1.0)
    out[sel] = shifted
    return out


def generate_synthetic(spec: SyntheticSpec, out) -> DatasetIndex:
    """Write a synthetic dataset class and return its index.

    Every pixel is a pure function of (spec.seed, sample path), so repeated
    runs produce byte-identical files regardless of generation order.
    """
    out = Path(out)
    class_dir = out / spec.class_name
    size = spec.image_size

    def normal_image(tag: str, i: int) -> np.ndarray:
        return _texture(np.random.default_rng(derive_seed(spec.seed, tag, i, "image")), size)

    for i in range(spec.n_train_normal):
        write_image(
            Image.from_array(normal_image("train/good", i)),
            class_dir / "train" / GOOD_CLASS / f"{i:03d}.png",
        )
    for i in range(spec.n_test_normal):
        write_image(
            Image.from_array(normal_image("test/good", i)),
            class_dir / "test" / GOOD_CLASS / f"{i:03d}.png",
        )
    for dspec in spec.defect_specs:
        tag = f"test/{dspec.name}"
        for i in range(dspec.count):
            base = normal_image(tag, i)
            mask_rng = np.random.default_rng(derive_seed(spec.seed, tag, i, "mask"))
            mask = _shapes.defect_mask(mask_rng, size, size, dspec.kind, dspec.area_fraction_range)
            fill_rng = np.random.default_rng(derive_seed(spec.seed, tag, i, "fill"))
            img = _inject_defect(fill_rng, base, mask, dspec.kind)
            write_image(Image.from_array(img), class_dir / "test" / dspec.name / f"{i:03d}.png")
            write_mask(
                PixelMask.from_array(mask),
                class_dir / "ground_truth" / dspec.name / f"{i:03d}{MASK_SUFFIX}.png",
            )
    return load_dataset(out, spec.class_name)
