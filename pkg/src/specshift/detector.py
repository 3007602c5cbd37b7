"""Patch-feature memory-bank detector.

A classical nearest-neighbour detector over dense patch descriptors. Each
patch is summarized by per-channel mean intensity, pooled standard
deviation, a gradient-magnitude histogram, and (weakly weighted) normalized
patch-center coordinates. Training collects descriptors from every training
image into a memory bank, optionally condensed by a greedy k-center coreset,
which keeps far-apart (hence rare) features instead of frequency-weighted
ones. Scoring is the mean distance to the k nearest bank entries.

With more than one epoch, later epochs rebuild the bank from the training
stream after the re-paste augmentation driven by the previous epoch's model,
so appearance the model flags confidently gets folded back into the bank.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import cdist

from ._util import derive_seed
from .core import AnomalyMap, Image
from .dataset_io import resize_bilinear
from .repaste import RepasteConfig, repaste_chain

MODEL_FORMAT = "specshift-detector"
MODEL_VERSION = 1
NORMALIZATION = "per_image_minmax"


@dataclass(frozen=True)
class ModelConfig:
    """Descriptor and bank parameters; fixed for the life of a model."""

    patch_size: int = 8
    stride: int = 4
    k_neighbors: int = 3
    coreset_fraction: float = 1.0
    grad_bins: int = 8
    coord_weight: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be positive, got {self.patch_size}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be positive, got {self.k_neighbors}")
        if not 0.0 < self.coreset_fraction <= 1.0:
            raise ValueError(
                f"coreset_fraction must lie in (0, 1], got {self.coreset_fraction}"
            )
        if self.grad_bins < 2:
            raise ValueError(f"grad_bins must be at least 2, got {self.grad_bins}")
        if self.coord_weight < 0.0:
            raise ValueError(f"coord_weight must be non-negative, got {self.coord_weight}")


@dataclass(frozen=True)
class TrainConfig:
    """Training loop parameters: epochs, augmentation, and stream order."""

    epochs: int = 2
    repaste: RepasteConfig = field(default_factory=RepasteConfig)
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")


@dataclass(frozen=True, eq=False)
class PatchFeature:
    """One patch descriptor and its center pixel (x, y)."""

    vector: np.ndarray
    center: tuple[float, float]

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True, eq=False)
class DetectorModel:
    """Fitted detector: a read-only feature bank plus its configuration."""

    config: ModelConfig
    channels: int
    image_width: int
    image_height: int
    bank: np.ndarray
    normalization: str = NORMALIZATION
    trained_on: dict = field(default_factory=dict)

    def __post_init__(self):
        bank = np.array(self.bank, dtype=np.float64)
        if bank.ndim != 2 or bank.shape[0] == 0:
            raise ValueError("memory bank must be a non-empty 2-D array")
        bank.setflags(write=False)
        object.__setattr__(self, "bank", bank)


def _grad_edges(bins: int) -> np.ndarray:
    # Interior bin edges, log-spaced over the gradient magnitudes smooth
    # textures actually produce; the last bin catches everything sharper.
    return np.geomspace(0.01, 0.6, bins - 1)


def _feature_matrix(img: Image, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dense patch descriptors for one image.

    Returns (features (n, d), centers (n, 2)) in row-major grid order. The
    grid has floor((dim - patch) / stride) + 1 positions per axis.
    """
    p, s = cfg.patch_size, cfg.stride
    if p > img.width or p > img.height:
        raise ValueError(
            f"patch size {p} exceeds image dimensions {img.width}x{img.height}"
        )
    pix = img.pixels()
    windows = sliding_window_view(pix, (p, p), axis=(0, 1))[::s, ::s]
    means = windows.mean(axis=(-2, -1))
    stds = windows.std(axis=(-3, -2, -1))[..., None]

    gray = pix.mean(axis=2)
    gy, gx = np.gradient(gray)
    magnitude = np.hypot(gx, gy)
    bin_idx = np.searchsorted(_grad_edges(cfg.grad_bins), magnitude, side="right")
    bin_windows = sliding_window_view(bin_idx, (p, p))[::s, ::s]
    hist = np.stack(
        [(bin_windows == b).mean(axis=(-2, -1)) for b in range(cfg.grad_bins)], axis=-1
    )

    n_y, n_x = windows.shape[:2]
    cx = np.arange(n_x) * s + (p - 1) / 2.0
    cy = np.arange(n_y) * s + (p - 1) / 2.0
    norm_x = cx / (img.width - 1) if img.width > 1 else np.zeros_like(cx)
    norm_y = cy / (img.height - 1) if img.height > 1 else np.zeros_like(cy)
    coord = np.empty((n_y, n_x, 2))
    coord[:, :, 0] = norm_x[None, :] * cfg.coord_weight
    coord[:, :, 1] = norm_y[:, None] * cfg.coord_weight

    features = np.concatenate([means, stds, hist, coord], axis=-1)
    centers = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)
    return features.reshape(-1, features.shape[-1]), centers


def extract_patches(img: Image, patch_size: int, stride: int) -> list[PatchFeature]:
    """Patch descriptors with default descriptor settings, grid order."""
    cfg = ModelConfig(patch_size=patch_size, stride=stride)
    features, centers = _feature_matrix(img, cfg)
    return [PatchFeature(vector=v, center=(c[0], c[1])) for v, c in zip(features, centers)]


def _canonical(features: np.ndarray) -> np.ndarray:
    """Sort feature rows lexicographically and drop exact duplicates.

    The bank becomes a function of the feature set alone, independent of
    image order, any partitioning of the extraction work, or how many times
    the same content was seen.
    """
    return np.unique(features, axis=0)


def _greedy_coreset(features: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Greedy k-center (farthest-point) subset of the feature rows.

    Selects max(1, ceil(fraction * n)) rows; fraction 1.0 is the identity.
    Farthest-point selection retains isolated rows, so rare appearance
    survives condensation.
    """
    n = features.shape[0]
    if fraction >= 1.0:
        return features
    m = max(1, math.ceil(fraction * n))
    rng = np.random.default_rng(derive_seed(seed, "coreset"))
    chosen = [int(rng.integers(n))]
    deltas = features - features[chosen[0]]
    min_dist = np.einsum("ij,ij->i", deltas, deltas)
    for _ in range(m - 1):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        deltas = features - features[nxt]
        min_dist = np.minimum(min_dist, np.einsum("ij,ij->i", deltas, deltas))
    return features[np.array(chosen)]


def _collect_bank(feature_blocks: Sequence[np.ndarray], cfg: ModelConfig) -> np.ndarray:
    merged = _canonical(np.vstack(list(feature_blocks)))
    return _greedy_coreset(merged, cfg.coreset_fraction, cfg.seed)


def fit(
    train_images: Sequence[Image],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    *,
    trained_on: dict | None = None,
) -> DetectorModel:
    """Fit the detector on normal training images.

    Epoch 1 banks the raw images. Each later epoch reshuffles the stream,
    runs the re-paste chain under the model fitted so far, and adds the
    augmented stream's features to the bank, so pasted appearance extends
    the raw appearance rather than replacing it. With augmentation off,
    every epoch would reproduce the raw bank, so only the first is run.
    """
    images = list(train_images)
    if not images:
        raise ValueError("training set is empty")
    w, h, c = images[0].width, images[0].height, images[0].channels
    for img in images:
        if (img.width, img.height, img.channels) != (w, h, c):
            raise ValueError("training images must share dimensions and channels")

    model = None
    feature_blocks: list[np.ndarray] = []
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng(derive_seed(cfg.shuffle_seed, "epoch", epoch))
        stream = [images[i] for i in rng.permutation(len(images))]
        if epoch > 1:
            prev = model
            stream = repaste_chain(stream, lambda im: score(prev, im)[0], cfg.repaste)
        feature_blocks.extend(_feature_matrix(img, model_cfg)[0] for img in stream)
        model = DetectorModel(
            config=model_cfg,
            channels=c,
            image_width=w,
            image_height=h,
            bank=_collect_bank(feature_blocks, model_cfg),
            trained_on=dict(trained_on or {}),
        )
        if cfg.repaste.mode == "off":
            break
    return model


def score(
    model: DetectorModel, img: Image, *, raw: bool = False
) -> tuple[AnomalyMap, float]:
    """Score one image against the bank.

    Patch scores (mean distance to the k nearest bank features) are placed
    on the patch grid and bilinearly upsampled to image dimensions. The
    image score is the maximum raw upsampled pixel; the returned map is the
    raw map min-max normalized per image (a constant map normalizes to all
    zeros). Pass raw=True to get the unnormalized distance map instead.
    """
    if img.channels != model.channels:
        raise ValueError(
            f"channel mismatch: model expects {model.channels}, image has {img.channels}"
        )
    cfg = model.config
    features, _ = _feature_matrix(img, cfg)
    distances = cdist(features, model.bank)
    k = min(cfg.k_neighbors, model.bank.shape[0])
    patch_scores = np.partition(distances, k - 1, axis=1)[:, :k].mean(axis=1)

    p, s = cfg.patch_size, cfg.stride
    n_x = (img.width - p) // s + 1
    n_y = (img.height - p) // s + 1
    grid = AnomalyMap.from_array(patch_scores.reshape(n_y, n_x))
    distance_map = resize_bilinear(grid, img.width, img.height)
    image_score = float(distance_map.data.max())
    if raw:
        return distance_map, image_score
    lo, hi = float(distance_map.data.min()), image_score
    if hi > lo:
        normalized = (distance_map.grid() - lo) / (hi - lo)
    else:
        normalized = np.zeros((img.height, img.width))
    return AnomalyMap.from_array(normalized, normalized=True), image_score


def save_model(model: DetectorModel, path) -> None:
    """Write a model file: one JSON header line, then raw bank bytes.

    Little-endian float64 bank bytes follow the newline; the encoding is
    exact, so load_model(save_model(m)) reproduces the bank bit for bit.
    """
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "channels": model.channels,
        "image_width": model.image_width,
        "image_height": model.image_height,
        "normalization": model.normalization,
        "trained_on": model.trained_on,
        "bank_shape": list(model.bank.shape),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = np.ascontiguousarray(model.bank, dtype="<f8").tobytes()
    path.write_bytes(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + body)


def load_model(path) -> DetectorModel:
    path = Path(path)
    blob = path.read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: not a detector model file")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: not a detector model file: {exc}") from exc
    if header.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a detector model file")
    if header.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {header.get('version')!r}")
    rows, cols = header["bank_shape"]
    bank = np.frombuffer(blob[nl + 1 :], dtype="<f8")
    if bank.size != rows * cols:
        raise ValueError(
            f"{path}: bank payload holds {bank.size} values, header promises {rows * cols}"
        )
    return DetectorModel(
        config=ModelConfig(**header["config"]),
        channels=header["channels"],
        image_width=header["image_width"],
        image_height=header["image_height"],
        bank=bank.reshape(rows, cols),
        normalization=header["normalization"],
        trained_on=header["trained_on"],
    )
