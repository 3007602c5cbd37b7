"""Procedural defect-region synthesis with exact pixel-count control.

Each shape kind defines a scalar potential over the pixel grid; the mask is
the set of k lowest-potential pixels, where k is drawn from the pixel-count
window implied by the requested area-fraction range. Selecting exactly k
pixels makes the resulting area fraction verifiable rather than approximate.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

KINDS = ("spot", "scratch", "blob")

# Axis-aligned scratches only: a segment of length ~5*sqrt(k) keeps the
# bounding box at least 4x longer than wide for any feasible k.
_SCRATCH_LENGTH_FACTOR = 5.0
_SCRATCH_MIN_PIXELS = 4


def pixel_count_bounds(area_range: tuple[float, float], total: int) -> tuple[int, int]:
    """Inclusive [lo, hi] pixel counts realizing an area-fraction range.

    Raises ValueError when no integer count lies inside the range.
    """
    lo, hi = area_range
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError(f"area fraction range must satisfy 0 < lo <= hi < 1, got ({lo}, {hi})")
    k_lo = max(1, math.ceil(lo * total))
    k_hi = math.floor(hi * total)
    if k_lo > k_hi:
        raise ValueError(
            f"area fraction range ({lo}, {hi}) is unsatisfiable at {total} pixels: "
            f"no integer count in [{lo * total:.3f}, {hi * total:.3f}]"
        )
    return k_lo, k_hi


def _grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def _spot_potential(rng: np.random.Generator, width: int, height: int, k: int) -> np.ndarray:
    radius = math.sqrt(k / math.pi) + 1.0
    cx = rng.uniform(min(radius, width / 2), max(width - 1 - radius, width / 2))
    cy = rng.uniform(min(radius, height / 2), max(height - 1 - radius, height / 2))
    ax = rng.uniform(0.8, 1.25)
    ay = rng.uniform(0.8, 1.25)
    xs, ys = _grid(width, height)
    return ax * (xs - cx) ** 2 + ay * (ys - cy) ** 2


def _scratch_potential(rng: np.random.Generator, width: int, height: int, k: int) -> np.ndarray:
    # Placement below needs 1 + length/2 <= axis - 2 - length/2, so the
    # segment can never exceed axis - 3.
    length = min(math.ceil(_SCRATCH_LENGTH_FACTOR * math.sqrt(k)), min(width, height) - 3)
    if length < _SCRATCH_MIN_PIXELS:
        raise ValueError(
            f"scratch of {k} pixels does not fit a {width}x{height} image"
        )
    # Bounding box is ~length by ~(k/length + 1); demand the 4:1 aspect
    # with margin so discretization cannot erode it.
    if length / (k / length + 1.0) < 4.5:
        raise ValueError(
            f"scratch of {k} pixels in a {width}x{height} image cannot keep an "
            "elongated bounding box"
        )
    half = length / 2.0
    horizontal = bool(rng.integers(2))
    # The cross-axis coordinate snaps to a pixel row/column so thin scratches
    # fill one line instead of straddling two equidistant ones.
    if horizontal:
        cx = rng.uniform(1 + half, width - 2 - half)
        cy = float(round(rng.uniform(1.0, height - 2.0)))
        x0, x1, y0, y1 = cx - half, cx + half, cy, cy
    else:
        cx = float(round(rng.uniform(1.0, width - 2.0)))
        cy = rng.uniform(1 + half, height - 2 - half)
        x0, x1, y0, y1 = cx, cx, cy - half, cy + half
    xs, ys = _grid(width, height)
    # Distance from each pixel center to the segment (x0,y0)-(x1,y1).
    dx, dy = x1 - x0, y1 - y0
    seg_len_sq = dx * dx + dy * dy
    t = ((xs - x0) * dx + (ys - y0) * dy) / seg_len_sq
    t = np.clip(t, 0.0, 1.0)
    px, py = x0 + t * dx, y0 + t * dy
    return np.hypot(xs - px, ys - py)


def _blob_potential(rng: np.random.Generator, width: int, height: int, k: int) -> np.ndarray:
    noise = rng.standard_normal((height, width))
    sigma = max(2.0, min(width, height) / 16.0)
    return -gaussian_filter(noise, sigma=sigma)


_POTENTIALS = {"spot": _spot_potential, "scratch": _scratch_potential, "blob": _blob_potential}


def defect_mask(
    rng: np.random.Generator,
    width: int,
    height: int,
    kind: str,
    area_range: tuple[float, float],
) -> np.ndarray:
    """Synthesize a (height, width) uint8 defect mask of the given kind.

    The ones count always lands inside the pixel-count window for
    ``area_range``; unsatisfiable ranges raise ValueError.
    """
    if kind not in _POTENTIALS:
        raise ValueError(f"unknown defect kind: {kind!r} (expected one of {KINDS})")
    if width < 4 or height < 4:
        raise ValueError(f"image too small for defect synthesis: {width}x{height}")
    k_lo, k_hi = pixel_count_bounds(area_range, width * height)
    if kind == "scratch":
        k_lo = max(k_lo, _SCRATCH_MIN_PIXELS)
        if k_lo > k_hi:
            raise ValueError(
                f"area fraction range {area_range} leaves no room for a scratch "
                f"of at least {_SCRATCH_MIN_PIXELS} pixels"
            )
    k = int(rng.integers(k_lo, k_hi + 1))
    potential = _POTENTIALS[kind](rng, width, height, k)
    # Tiny jitter breaks exact ties so the k-smallest set is unique.
    potential = potential + rng.random(potential.shape) * 1e-9
    flat = np.argpartition(potential.ravel(), k - 1)[:k]
    mask = np.zeros(width * height, dtype=np.uint8)
    mask[flat] = 1
    mask = mask.reshape(height, width)
    if kind == "scratch":
        ys, xs = np.nonzero(mask)
        spans = (ys.max() - ys.min() + 1, xs.max() - xs.min() + 1)
        if max(spans) < 4 * min(spans):
            raise ValueError("scratch mask lost its elongated shape")
    return mask
