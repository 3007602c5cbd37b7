"""Specification-change scenario construction.

A scenario pairs two views of the same data. The "changed" manifest encodes
the world after a specification change redefines one defect class; the
"standard" manifest encodes the world before it. Two change directions are
supported:

* A2N: a defect class stops counting as defective. Half of its samples move
  into the training set relabeled normal, the other half stay in test,
  also relabeled normal.
* N2A: a pseudo-defect class starts counting as defective. Under the old
  specification half of it trains as normal; under the new one the training
  set drops it and the test half is labeled anomalous.

In both directions the first floor(N/2) target samples (lexicographic path
order) go to the training side and the rest to the test side, so both
manifests of a pair see the same physical split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from ._util import stable_digest
from .core import (
    LABEL_ANOMALOUS,
    LABEL_NORMAL,
    ROLE_TEST,
    ROLE_TRAIN,
    SampleRecord,
)
from .dataset_io import GOOD_CLASS, DatasetIndex

SCENARIO_A2N = "A2N"
SCENARIO_N2A = "N2A"
SUB_CHANGED = "changed"
SUB_STANDARD = "standard"

MANIFEST_FORMAT = "specshift-manifest"
MANIFEST_VERSION = 1
BUILDER_VERSION = "specshift-scenario-1"

_RECORD_FIELDS = ("id", "image_path", "mask_path", "label", "role", "defect_class", "is_target")


class ManifestError(ValueError):
    """A manifest violates its schema or an invariant."""


@dataclass(frozen=True)
class ScenarioManifest:
    scenario: str
    sub_scenario: str
    class_name: str
    target_class: str
    train: tuple[SampleRecord, ...]
    test: tuple[SampleRecord, ...]
    provenance: dict

    def test_targets(self) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.test if s.is_target)

    def by_id(self) -> dict[str, SampleRecord]:
        return {s.id: s for s in tuple(self.train) + tuple(self.test)}


def select_targets(index: DatasetIndex, max_area_fraction: float = 0.01) -> list[str]:
    """Defect classes whose mean mask area stays strictly under the cutoff.

    These are the classes small enough that a specification change over them
    is plausible; returned sorted by name.
    """
    if not index.defect_classes:
        raise ValueError(f"dataset class {index.class_name!r} has no defect classes")
    if max_area_fraction <= 0.0:
        raise ValueError(f"max_area_fraction must be positive, got {max_area_fraction}")
    return sorted(
        s.name for s in index.defect_classes if s.mean_area_fraction < max_area_fraction
    )


def _index_provenance(index: DatasetIndex, target_rule: dict | None) -> dict:
    listing = tuple(
        (s.id, s.image_path, s.mask_path, s.label, s.role, s.defect_class)
        for s in index.samples
    )
    return {
        "dataset_hash": stable_digest(index.class_name, listing),
        "builder_version": BUILDER_VERSION,
        "target_rule": dict(target_rule) if target_rule else {"kind": "explicit"},
    }


def _split_targets(targets: list[SampleRecord]) -> tuple[list[SampleRecord], list[SampleRecord]]:
    n = len(targets)
    if n < 2:
        raise ValueError(f"need at least 2 target samples to split, got {n}")
    targets = sorted(targets, key=lambda s: s.image_path)
    half = n // 2
    return targets[:half], targets[half:]


def _sorted(records) -> tuple[SampleRecord, ...]:
    return tuple(sorted(records, key=lambda s: s.image_path))


def build_a2n(
    index: DatasetIndex, target_class: str, target_rule: dict | None = None
) -> tuple[ScenarioManifest, ScenarioManifest]:
    """Build the (changed, standard) manifest pair where ``target_class``
    stops counting as defective.
    """
    known = {s.name for s in index.defect_classes}
    if target_class not in known:
        raise ValueError(
            f"unknown target class {target_class!r}; dataset has {sorted(known)}"
        )
    train_normals = [s for s in index.samples if s.role == ROLE_TRAIN]
    test_normals = [
        s for s in index.samples if s.role == ROLE_TEST and s.defect_class == GOOD_CLASS
    ]
    targets = [s for s in index.samples if s.defect_class == target_class]
    others = [
        s
        for s in index.samples
        if s.role == ROLE_TEST and s.defect_class not in (GOOD_CLASS, target_class)
    ]
    head, tail = _split_targets(targets)

    provenance = _index_provenance(index, target_rule)
    common = dict(
        scenario=SCENARIO_A2N,
        class_name=index.class_name,
        target_class=target_class,
        provenance=provenance,
    )
    changed = ScenarioManifest(
        sub_scenario=SUB_CHANGED,
        train=_sorted(
            train_normals
            + [replace(s, label=LABEL_NORMAL, role=ROLE_TRAIN, is_target=True) for s in head]
        ),
        test=_sorted(
            test_normals
            + [replace(s, label=LABEL_NORMAL, is_target=True) for s in tail]
            + others
        ),
        **common,
    )
    standard = ScenarioManifest(
        sub_scenario=SUB_STANDARD,
        train=_sorted(train_normals),
        test=_sorted(
            test_normals
            + [replace(s, label=LABEL_ANOMALOUS, is_target=True) for s in tail]
            + others
        ),
        **common,
    )
    return changed, standard


def build_n2a(
    index: DatasetIndex,
    pseudo: list[SampleRecord],
    pseudo_class: str = "pseudo",
) -> tuple[ScenarioManifest, ScenarioManifest]:
    """Build the (changed, standard) manifest pair where a pseudo-defect
    class starts counting as defective.

    ``pseudo`` records must all carry masks and ``is_target=True``; their ids
    must not collide with dataset sample ids.
    """
    for s in pseudo:
        if s.mask_path is None:
            raise ValueError(f"pseudo sample {s.id!r} has no mask")
        if not s.is_target:
            raise ValueError(f"pseudo sample {s.id!r} is not flagged as a target")
    index_ids = {s.id for s in index.samples}
    clashes = sorted(index_ids & {s.id for s in pseudo})
    if clashes:
        raise ValueError(f"pseudo sample ids collide with dataset ids: {clashes[:3]}")

    train_normals = [s for s in index.samples if s.role == ROLE_TRAIN]
    test_all = [s for s in index.samples if s.role == ROLE_TEST]
    head, tail = _split_targets(list(pseudo))

    provenance = _index_provenance(index, {"kind": "pseudo", "pseudo_class": pseudo_class})
    common = dict(
        scenario=SCENARIO_N2A,
        class_name=index.class_name,
        target_class=pseudo_class,
        provenance=provenance,
    )
    changed = ScenarioManifest(
        sub_scenario=SUB_CHANGED,
        train=_sorted(train_normals),
        test=_sorted(
            test_all
            + [replace(s, label=LABEL_ANOMALOUS, role=ROLE_TEST, is_target=True) for s in tail]
        ),
        **common,
    )
    standard = ScenarioManifest(
        sub_scenario=SUB_STANDARD,
        train=_sorted(
            train_normals
            + [replace(s, label=LABEL_NORMAL, role=ROLE_TRAIN, is_target=True) for s in head]
        ),
        test=_sorted(
            test_all
            + [replace(s, label=LABEL_NORMAL, role=ROLE_TEST, is_target=True) for s in tail]
        ),
        **common,
    )
    return changed, standard


def _expected_test_target_label(scenario: str, sub_scenario: str) -> str:
    if (scenario == SCENARIO_A2N) == (sub_scenario == SUB_CHANGED):
        return LABEL_NORMAL
    return LABEL_ANOMALOUS


def validate_manifest(manifest: ScenarioManifest) -> None:
    """Raise ManifestError naming the first violated invariant."""
    if manifest.scenario not in (SCENARIO_A2N, SCENARIO_N2A):
        raise ManifestError(f"unknown scenario: {manifest.scenario!r}")
    if manifest.sub_scenario not in (SUB_CHANGED, SUB_STANDARD):
        raise ManifestError(f"unknown sub_scenario: {manifest.sub_scenario!r}")
    seen: set[str] = set()
    for s in tuple(manifest.train) + tuple(manifest.test):
        if s.id in seen:
            raise ManifestError(f"invariant violated: duplicate sample id {s.id!r}")
        seen.add(s.id)
    for s in manifest.train:
        if s.label != LABEL_NORMAL:
            raise ManifestError(
                f"invariant violated: training sample {s.id!r} is labeled {s.label}"
            )
        if s.role != ROLE_TRAIN:
            raise ManifestError(f"invariant violated: train entry {s.id!r} has role {s.role}")
    for s in manifest.test:
        if s.role != ROLE_TEST:
            raise ManifestError(f"invariant violated: test entry {s.id!r} has role {s.role}")
    if manifest.scenario == SCENARIO_A2N and manifest.sub_scenario == SUB_STANDARD:
        for s in manifest.train:
            if s.is_target:
                raise ManifestError(
                    "invariant violated: standard A2N training set contains "
                    f"target sample {s.id!r}"
                )
    expected = _expected_test_target_label(manifest.scenario, manifest.sub_scenario)
    for s in manifest.test:
        if s.is_target and s.label != expected:
            raise ManifestError(
                f"invariant violated: test target {s.id!r} is labeled {s.label}, "
                f"expected {expected} for {manifest.scenario}/{manifest.sub_scenario}"
            )


def _record_to_dict(s: SampleRecord) -> dict:
    return {f: getattr(s, f) for f in _RECORD_FIELDS}


def _record_from_dict(raw: dict, where: str) -> SampleRecord:
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: sample entry is not an object")
    missing = [f for f in _RECORD_FIELDS if f not in raw]
    if missing:
        raise ManifestError(f"{where}: sample entry missing field {missing[0]!r}")
    try:
        return SampleRecord(**{f: raw[f] for f in _RECORD_FIELDS})
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def write_manifest(manifest: ScenarioManifest, path) -> None:
    """Validate then serialize a manifest as canonical JSON."""
    validate_manifest(manifest)
    payload = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "scenario": manifest.scenario,
        "sub_scenario": manifest.sub_scenario,
        "class_name": manifest.class_name,
        "target_class": manifest.target_class,
        "train": [_record_to_dict(s) for s in manifest.train],
        "test": [_record_to_dict(s) for s in manifest.test],
        "provenance": manifest.provenance,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> ScenarioManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    if payload.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not a scenario manifest")
    for field in ("scenario", "sub_scenario", "class_name", "target_class", "train", "test"):
        if field not in payload:
            raise ManifestError(f"{path}: missing field {field!r}")
    manifest = ScenarioManifest(
        scenario=payload["scenario"],
        sub_scenario=payload["sub_scenario"],
        class_name=payload["class_name"],
        target_class=payload["target_class"],
        train=tuple(_record_from_dict(r, f"{path} train") for r in payload["train"]),
        test=tuple(_record_from_dict(r, f"{path} test") for r in payload["test"]),
        provenance=payload.get("provenance", {}),
    )
    validate_manifest(manifest)
    return manifest
