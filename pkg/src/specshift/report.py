"""Figure and table rendering for evaluation outputs.

Every renderer writes files with fixed geometry, fonts, and colormaps so
reruns are byte-identical. Figures go alongside the delimited tables the
CLI emits; nothing here computes metrics.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import AnomalyMap, Image, PixelMask
from .metrics import SAurocReport

_DPI = 110


def write_table(rows, path) -> None:
    """Write (metric, value) rows as a two-column CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in rows:
            writer.writerow([name, repr(value) if isinstance(value, float) else value])


def _show_image(ax, img: Image) -> None:
    pix = img.pixels()
    if img.channels == 1:
        ax.imshow(pix[:, :, 0], cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
    else:
        ax.imshow(pix, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])


def render_heatmap(
    img: Image,
    amap: AnomalyMap,
    mask: PixelMask | None,
    path,
    title: str = "",
) -> None:
    """Side-by-side panel: input, anomaly heatmap, and overlay.

    When a ground-truth mask is given its outline is drawn on the overlay
    panel.
    """
    panels = 3
    fig, axes = plt.subplots(1, panels, figsize=(3.0 * panels, 3.2), dpi=_DPI)
    _show_image(axes[0], img)
    axes[0].set_title("input", fontsize=9)

    heat = amap.grid()
    vmax = 1.0 if amap.normalized else max(float(heat.max()), 1e-12)
    axes[1].imshow(heat, cmap="inferno", vmin=0.0, vmax=vmax, interpolation="nearest")
    axes[1].set_xticks([])
    axes[1].set_yticks([])
    axes[1].set_title("anomaly map", fontsize=9)

    _show_image(axes[2], img)
    axes[2].imshow(heat, cmap="inferno", vmin=0.0, vmax=vmax, alpha=0.45, interpolation="nearest")
    if mask is not None and mask.ones_count() > 0:
        axes[2].contour(mask.grid(), levels=[0.5], colors="cyan", linewidths=1.0)
    axes[2].set_title("overlay", fontsize=9)

    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)


def render_metric_bars(values: dict[str, float], path, title: str = "") -> None:
    """Bar chart of metric values in [0, 1]."""
    names = list(values)
    heights = [values[n] for n in names]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(names), 3.4), dpi=_DPI)
    bars = ax.bar(names, heights, color="#4878cf", width=0.6)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("value")
    for bar, h in zip(bars, heights):
        ax.text(
            bar.get_x() + bar.get_width() / 2.0,
            h + 0.02,
            f"{h:.3f}",
            ha="center",
            fontsize=8,
        )
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)


def render_s_auroc(report: SAurocReport, path) -> None:
    """Pre/post bar pair with the delta annotated."""
    fig, ax = plt.subplots(figsize=(4.2, 3.4), dpi=_DPI)
    names = ["pre-change", "post-change"]
    heights = [report.pre_change_auroc, report.post_change_auroc]
    bars = ax.bar(names, heights, color=["#9aa5b1", "#4878cf"], width=0.55)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("S-AUROC")
    for bar, h in zip(bars, heights):
        ax.text(bar.get_x() + bar.get_width() / 2.0, h + 0.02, f"{h:.3f}", ha="center", fontsize=8)
    sign = "+" if report.delta >= 0 else ""
    ax.set_title(
        f"{report.scenario} target={report.target_class} "
        f"delta={sign}{report.delta:.3f}",
        fontsize=10,
    )
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)


def render_roc(fpr, tpr, path, title: str = "") -> None:
    """ROC polyline with the chance diagonal."""
    fig, ax = plt.subplots(figsize=(3.8, 3.6), dpi=_DPI)
    ax.plot([0, 1], [0, 1], linestyle="--", color="#9aa5b1", linewidth=1.0)
    ax.plot(np.asarray(fpr), np.asarray(tpr), color="#4878cf", linewidth=1.5)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
