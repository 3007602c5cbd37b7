"""Training-time re-paste augmentation.

During multi-epoch training, regions the current model already finds
suspicious in one training image are pasted onto the next one in the
stream. The receiving image keeps its own pixels everywhere else, so the
augmentation adds suspect appearance without inventing labels. Two paste
variants exist: ``mixup`` averages donor and receiver inside the pasted
region (soft edges); ``hard`` copies the donor verbatim (sharp edges).
``off`` disables the whole mechanism.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import AnomalyMap, Image, PixelMask, binarize_map
from .dataset_io import resize_bilinear

MODES = ("mixup", "hard", "off")
DEFAULT_TAU = 0.9


@dataclass(frozen=True)
class RepasteConfig:
    """Paste behavior: score threshold, variant, and chain input choice.

    ``chain_on_raw`` switches the chain to score and paste from the raw
    previous image instead of its augmented version.
    """

    tau: float = DEFAULT_TAU
    mode: str = "mixup"
    chain_on_raw: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.mode not in MODES:
            raise ValueError(f"unknown repaste mode: {self.mode!r} (expected one of {MODES})")


def extract_mask(map_prev: AnomalyMap, width: int, height: int, cfg: RepasteConfig) -> PixelMask:
    """Paste region: the map resized to the target dims, thresholded at
    strictly above ``cfg.tau``. The map must be normalized."""
    return binarize_map(resize_bilinear(map_prev, width, height), cfg.tau)


def repaste(x_prev: Image, map_prev: AnomalyMap, x_next: Image, cfg: RepasteConfig) -> Image:
    """Paste the suspicious region of ``x_prev`` onto ``x_next``.

    Pixels outside the extracted mask are returned bit-identical to
    ``x_next``. Inside it, ``mixup`` writes the mean of the two images and
    ``hard`` writes ``x_prev`` verbatim; ``off`` returns ``x_next``.
    """
    if cfg.mode == "off":
        return x_next
    if (x_prev.width, x_prev.height, x_prev.channels) != (
        x_next.width,
        x_next.height,
        x_next.channels,
    ):
        raise ValueError(
            f"dimension mismatch: {x_prev.width}x{x_prev.height}x{x_prev.channels} "
            f"vs {x_next.width}x{x_next.height}x{x_next.channels}"
        )
    mask = extract_mask(map_prev, x_next.width, x_next.height, cfg)
    hot = mask.grid().astype(bool)[:, :, None]
    a = x_prev.pixels()
    b = x_next.pixels()
    if cfg.mode == "mixup":
        pasted = np.where(hot, (a + b) / 2.0, b)
    else:
        pasted = np.where(hot, a, b)
    return Image.from_array(pasted)


def repaste_chain(
    images: Sequence[Image],
    score_fn: Callable[[Image], AnomalyMap],
    cfg: RepasteConfig,
) -> list[Image]:
    """Run the paste sequentially over an ordered stream.

    The first image passes through unmodified; each later image receives a
    paste driven by the model's map of the previous stream element (the
    augmented one unless ``cfg.chain_on_raw``). Information only flows
    forward.
    """
    if not images:
        raise ValueError("repaste chain needs at least one image")
    if cfg.mode == "off":
        return list(images)
    out = [images[0]]
    for i in range(1, len(images)):
        source = images[i - 1] if cfg.chain_on_raw else out[i - 1]
        out.append(repaste(source, score_fn(source), images[i], cfg))
    return out
