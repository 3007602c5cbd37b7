"""Evaluation metrics: image AUROC, pixel AUROC, region overlap (PRO), and
the specification-change metric S-AUROC.

All functions here are pure: they take scores and annotations, never paths.
AUROC uses the rank-statistic form (ties get half credit), so it is exact
and O(n log n). PRO sweeps every distinct score once, accumulating region
coverage incrementally, and integrates the overlap-vs-FPR polyline up to a
false-positive-rate limit.

S-AUROC restricts scoring to the specification-change targets plus a fixed
contrast set, under one label assignment chosen by ``target_role``:

* ``as_normal``: targets count as normal (label 0), contrasts as anomalous.
* ``as_anomalous``: targets count as anomalous (label 1), contrasts as normal.

Both the pre-change and post-change model are scored under that same
assignment; the reported delta is post minus pre.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from .core import (
    LABEL_ANOMALOUS,
    TARGET_AS_ANOMALOUS,
    TARGET_AS_NORMAL,
    AnomalyMap,
    PixelMask,
    ScoreSet,
)
from .dataset_io import GOOD_CLASS
from .scenario import (
    SCENARIO_A2N,
    SUB_CHANGED,
    ScenarioManifest,
)

DEFAULT_FPR_LIMIT = 0.3
METRIC_KEYS = ("i_auroc", "p_auroc", "pro")

REPORT_FORMAT = "specshift-report"
S_AUROC_FORMAT = "specshift-s-auroc"


@dataclass(frozen=True)
class RocCurve:
    """Operating points of a score set, from (0, 0) to (1, 1)."""

    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    thresholds: tuple[float, ...]


@dataclass(frozen=True)
class ProCurve:
    """Mean per-region overlap as a function of false positive rate."""

    fpr: tuple[float, ...]
    overlap: tuple[float, ...]
    fpr_limit: float


@dataclass(frozen=True)
class SAurocReport:
    pre_change_auroc: float
    post_change_auroc: float
    delta: float
    target_class: str
    scenario: str
    target_role: str
    n_target: int
    n_contrast: int


@dataclass(frozen=True)
class MetricsReport:
    """Metric values for one manifest evaluation; unset metrics are None."""

    i_auroc: Optional[float]
    p_auroc: Optional[float]
    pro: Optional[float]
    fpr_limit: float
    n_test: int
    provenance: dict

    def metric_values(self) -> dict[str, float]:
        out = {}
        for key in METRIC_KEYS:
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _auroc_values(values: np.ndarray, labels: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must be finite")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUROC needs both classes, got {n_pos} anomalous and {n_neg} normal"
        )
    ranks = rankdata(values)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc(scores: ScoreSet) -> float:
    """Probability a random anomalous score exceeds a random normal one,
    counting ties as half. Exact, via average ranks."""
    return _auroc_values(scores.scores(), scores.labels())


def roc_curve(scores: ScoreSet) -> RocCurve:
    """Full ROC polyline; predictions are score >= threshold."""
    values = scores.scores()
    labels = scores.labels()
    if not ((labels == 1).any() and (labels == 0).any()):
        raise ValueError("ROC curve needs both classes")
    order = np.argsort(-values, kind="stable")
    values, labels = values[order], labels[order]
    distinct = np.flatnonzero(np.diff(values)) + 1
    cuts = np.concatenate([distinct, [values.size]])
    tp = np.cumsum(labels == 1)
    fp = np.cumsum(labels == 0)
    tpr = [0.0] + [tp[c - 1] / tp[-1] for c in cuts]
    fpr = [0.0] + [fp[c - 1] / fp[-1] for c in cuts]
    thresholds = [float("inf")] + [float(values[c - 1]) for c in cuts]
    return RocCurve(fpr=tuple(map(float, fpr)), tpr=tuple(map(float, tpr)), thresholds=tuple(thresholds))


def _check_pairs(pairs: Sequence[tuple[AnomalyMap, PixelMask]]) -> None:
    if not pairs:
        raise ValueError("no (map, mask) pairs given")
    for i, (amap, mask) in enumerate(pairs):
        if (amap.width, amap.height) != (mask.width, mask.height):
            raise ValueError(
                f"pair {i}: dimension mismatch, map {amap.width}x{amap.height} "
                f"vs mask {mask.width}x{mask.height}"
            )


def pixel_auroc(pairs: Sequence[tuple[AnomalyMap, PixelMask]]) -> float:
    """AUROC over all pixels of all pairs pooled together."""
    _check_pairs(pairs)
    values = np.concatenate([amap.data for amap, _ in pairs])
    labels = np.concatenate([mask.data for _, mask in pairs])
    return _auroc_values(values, labels)


def _connectivity_structure(connectivity: int) -> np.ndarray:
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def pro_curve(
    pairs: Sequence[tuple[AnomalyMap, PixelMask]],
    fpr_limit: float = DEFAULT_FPR_LIMIT,
    connectivity: int = 8,
) -> ProCurve:
    """Overlap-vs-FPR polyline swept over every distinct pooled score.

    Each ground-truth connected region contributes its covered fraction;
    the curve value is the mean over all regions. Predictions at threshold
    t are the pixels scoring strictly above t.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise ValueError(f"fpr_limit must lie in (0, 1], got {fpr_limit}")
    _check_pairs(pairs)
    structure = _connectivity_structure(connectivity)

    scores, weights, negatives = [], [], []
    n_regions = 0
    for amap, mask in pairs:
        labeled, count = ndimage.label(mask.grid(), structure=structure)
        labeled = labeled.ravel()
        sizes = np.bincount(labeled, minlength=count + 1).astype(np.float64)
        w = np.zeros(labeled.size)
        inside = labeled > 0
        w[inside] = 1.0 / sizes[labeled[inside]]
        scores.append(amap.data)
        weights.append(w)
        negatives.append(~inside)
        n_regions += count
    if n_regions == 0:
        raise ValueError("no ground-truth regions in any mask")
    s = np.concatenate(scores)
    w = np.concatenate(weights)
    neg = np.concatenate(negatives)
    n_neg = int(neg.sum())
    if n_neg == 0:
        raise ValueError("no normal pixels; FPR is undefined")

    order = np.argsort(-s, kind="stable")
    s, w, neg = s[order], w[order], neg[order]
    cum_w = np.concatenate([[0.0], np.cumsum(w)])
    cum_fp = np.concatenate([[0.0], np.cumsum(neg)])
    # Prediction sets are prefixes: threshold t opens every score > t, so
    # each distinct value contributes the prefix that ends just before it.
    starts = np.concatenate([[0], np.flatnonzero(np.diff(s)) + 1, [s.size]])
    fpr = cum_fp[starts] / n_neg
    overlap = cum_w[starts] / n_regions
    return ProCurve(
        fpr=tuple(map(float, fpr)),
        overlap=tuple(map(float, overlap)),
        fpr_limit=fpr_limit,
    )


def _integrate_to_limit(xs: np.ndarray, ys: np.ndarray, limit: float) -> float:
    """Area under a nondecreasing-x polyline over [0, limit], divided by
    limit. The polyline is linearly interpolated at the cut."""
    idx = int(np.searchsorted(xs, limit, side="right"))
    if idx >= xs.size:
        cut_x, cut_y = xs, ys
    else:
        x0, x1 = xs[idx - 1], xs[idx]
        y0, y1 = ys[idx - 1], ys[idx]
        y_lim = y0 if x1 == x0 else y0 + (y1 - y0) * (limit - x0) / (x1 - x0)
        cut_x = np.concatenate([xs[:idx], [limit]])
        cut_y = np.concatenate([ys[:idx], [y_lim]])
    return float(np.trapezoid(cut_y, cut_x) / limit)


def pro(
    pairs: Sequence[tuple[AnomalyMap, PixelMask]],
    fpr_limit: float = DEFAULT_FPR_LIMIT,
    connectivity: int = 8,
) -> float:
    """Per-region overlap integrated to ``fpr_limit`` and normalized, in [0, 1]."""
    curve = pro_curve(pairs, fpr_limit=fpr_limit, connectivity=connectivity)
    return _integrate_to_limit(
        np.array(curve.fpr), np.array(curve.overlap), fpr_limit
    )


def s_auroc(
    pre_scores: ScoreSet,
    post_scores: ScoreSet,
    target_ids: set[str],
    contrast_ids: set[str],
    target_role: str,
    *,
    target_class: str = "",
    scenario: str = "",
) -> SAurocReport:
    """AUROC restricted to specification-change targets plus a contrast set,
    for the pre-change and post-change model under one label assignment."""
    if target_role not in (TARGET_AS_NORMAL, TARGET_AS_ANOMALOUS):
        raise ValueError(f"unknown target role: {target_role!r}")
    target_ids, contrast_ids = set(target_ids), set(contrast_ids)
    if not target_ids or not contrast_ids:
        raise ValueError("target and contrast sets must both be non-empty")
    overlap = target_ids & contrast_ids
    if overlap:
        raise ValueError(f"target and contrast sets overlap: {sorted(overlap)[:3]}")

    target_label = 0 if target_role == TARGET_AS_NORMAL else 1
    wanted = sorted(target_ids) + sorted(contrast_ids)
    labels = np.array(
        [target_label] * len(target_ids) + [1 - target_label] * len(contrast_ids)
    )

    def restricted(scores: ScoreSet, name: str) -> np.ndarray:
        table = scores.by_id()
        missing = [i for i in wanted if i not in table]
        if missing:
            raise ValueError(f"{name} scores missing sample {missing[0]!r}")
        return np.array([table[i].score for i in wanted])

    pre = _auroc_values(restricted(pre_scores, "pre-change"), labels)
    post = _auroc_values(restricted(post_scores, "post-change"), labels)
    return SAurocReport(
        pre_change_auroc=pre,
        post_change_auroc=post,
        delta=post - pre,
        target_class=target_class,
        scenario=scenario,
        target_role=target_role,
        n_target=len(target_ids),
        n_contrast=len(contrast_ids),
    )


def manifest_target_role(manifest: ScenarioManifest) -> str:
    """Label assignment implied by a scenario: redefined-normal targets are
    scored as normal (A2N), redefined-anomalous ones as anomalous (N2A)."""
    return TARGET_AS_NORMAL if manifest.scenario == SCENARIO_A2N else TARGET_AS_ANOMALOUS


def manifest_contrast_ids(manifest: ScenarioManifest) -> set[str]:
    """Contrast set for S-AUROC, drawn from the changed manifest's test set.

    Targets scored as normal contrast against the remaining true anomalies;
    targets scored as anomalous contrast against the true normals.
    """
    if manifest.sub_scenario != SUB_CHANGED:
        raise ValueError("contrast set is defined on the changed manifest")
    if manifest.scenario == SCENARIO_A2N:
        return {s.id for s in manifest.test if s.label == LABEL_ANOMALOUS and not s.is_target}
    return {s.id for s in manifest.test if s.defect_class == GOOD_CLASS}


def evaluate_manifest(
    scores: Mapping[str, tuple[float, AnomalyMap]],
    manifest: ScenarioManifest,
    *,
    masks: Optional[Mapping[str, PixelMask]] = None,
    fpr_limit: float = DEFAULT_FPR_LIMIT,
    metrics: Sequence[str] = METRIC_KEYS,
) -> MetricsReport:
    """Compute the requested metrics for one manifest's test set.

    ``scores`` must cover every test sample. Pixel metrics take each
    sample's effective ground truth: its mask when the manifest labels it
    anomalous, all-zero otherwise, so samples a specification change
    relabeled normal count as normal down to the pixel level.
    """
    unknown = [m for m in metrics if m not in METRIC_KEYS]
    if unknown:
        raise ValueError(f"unknown metric {unknown[0]!r} (expected subset of {METRIC_KEYS})")
    test = manifest.test
    if not test:
        raise ValueError("manifest has an empty test set")
    missing = [s.id for s in test if s.id not in scores]
    if missing:
        raise ValueError(f"scores missing test sample {missing[0]!r}")

    values = {}
    if "i_auroc" in metrics:
        values["i_auroc"] = _auroc_values(
            np.array([scores[s.id][0] for s in test]),
            np.array([1 if s.label == LABEL_ANOMALOUS else 0 for s in test]),
        )
    if "p_auroc" in metrics or "pro" in metrics:
        pairs = []
        for s in test:
            amap = scores[s.id][1]
            if s.label == LABEL_ANOMALOUS:
                if masks is None or s.id not in masks:
                    raise ValueError(f"no ground-truth mask supplied for {s.id!r}")
                mask = masks[s.id]
            else:
                mask = PixelMask.zeros(amap.width, amap.height)
            pairs.append((amap, mask))
        if "p_auroc" in metrics:
            values["p_auroc"] = pixel_auroc(pairs)
        if "pro" in metrics:
            values["pro"] = pro(pairs, fpr_limit=fpr_limit)

    provenance = dict(manifest.provenance)
    provenance.update(
        scenario=manifest.scenario,
        sub_scenario=manifest.sub_scenario,
        class_name=manifest.class_name,
        target_class=manifest.target_class,
    )
    return MetricsReport(
        i_auroc=values.get("i_auroc"),
        p_auroc=values.get("p_auroc"),
        pro=values.get("pro"),
        fpr_limit=fpr_limit,
        n_test=len(test),
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Report serialization


def write_report(report: MetricsReport, path) -> None:
    payload = {
        "format": REPORT_FORMAT,
        "version": 1,
        "metrics": report.metric_values(),
        "fpr_limit": report.fpr_limit,
        "n_test": report.n_test,
        "provenance": report.provenance,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_report(path) -> MetricsReport:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a metrics report")
    metrics = payload["metrics"]
    return MetricsReport(
        i_auroc=metrics.get("i_auroc"),
        p_auroc=metrics.get("p_auroc"),
        pro=metrics.get("pro"),
        fpr_limit=payload["fpr_limit"],
        n_test=payload["n_test"],
        provenance=payload["provenance"],
    )


def write_s_auroc_report(report: SAurocReport, path) -> None:
    payload = {"format": S_AUROC_FORMAT, "version": 1}
    payload.update(
        pre_change_auroc=report.pre_change_auroc,
        post_change_auroc=report.post_change_auroc,
        delta=report.delta,
        target_class=report.target_class,
        scenario=report.scenario,
        target_role=report.target_role,
        n_target=report.n_target,
        n_contrast=report.n_contrast,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_s_auroc_report(path) -> SAurocReport:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != S_AUROC_FORMAT:
        raise ValueError(f"{path}: not an s-auroc report")
    return SAurocReport(
        pre_change_auroc=payload["pre_change_auroc"],
        post_change_auroc=payload["post_change_auroc"],
        delta=payload["delta"],
        target_class=payload["target_class"],
        scenario=payload["scenario"],
        target_role=payload["target_role"],
        n_target=payload["n_target"],
        n_contrast=payload["n_contrast"],
    )
