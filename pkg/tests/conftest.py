"""Shared builders for in-memory dataset indexes and pseudo record lists."""

from specshift.core import LABEL_ANOMALOUS, LABEL_NORMAL, ROLE_TEST, ROLE_TRAIN, SampleRecord
from specshift.dataset_io import DatasetIndex, DefectClassStat


def make_index(n_train=4, n_test_good=3, defects=None, areas=None):
    """Dataset index with a good class plus the given defect classes.

    ``defects`` maps class name to test-sample count; ``areas`` overrides the
    recorded mean mask area fraction per class (default 0.005).
    """
    defects = defects if defects is not None else {"broken": 4, "glue": 3}
    areas = areas or {}
    records = []
    for i in range(n_train):
        rel = f"train/good/{i:03d}.png"
        records.append(SampleRecord(
            id=rel[:-4], image_path=rel, mask_path=None,
            label=LABEL_NORMAL, role=ROLE_TRAIN, defect_class="good",
        ))
    for i in range(n_test_good):
        rel = f"test/good/{i:03d}.png"
        records.append(SampleRecord(
            id=rel[:-4], image_path=rel, mask_path=None,
            label=LABEL_NORMAL, role=ROLE_TEST, defect_class="good",
        ))
    stats = []
    for name, count in sorted(defects.items()):
        for i in range(count):
            rel = f"test/{name}/{i:03d}.png"
            records.append(SampleRecord(
                id=rel[:-4], image_path=rel,
                mask_path=f"ground_truth/{name}/{i:03d}_mask.png",
                label=LABEL_ANOMALOUS, role=ROLE_TEST, defect_class=name,
            ))
        stats.append(DefectClassStat(
            name=name, mean_area_fraction=areas.get(name, 0.005), count=count,
        ))
    records.sort(key=lambda r: r.image_path)
    return DatasetIndex(root="/nowhere", class_name="grid", samples=tuple(records),
                        defect_classes=tuple(stats))


def make_pseudo(count):
    """Fabricated pseudo-anomaly records suitable for build_n2a."""
    records = []
    for i in range(count):
        rel = f"pseudo/{i:03d}.png"
        records.append(SampleRecord(
            id=f"pseudo/{i:03d}", image_path=rel,
            mask_path=f"pseudo_ground_truth/{i:03d}_mask.png",
            label=LABEL_ANOMALOUS, role=ROLE_TEST, defect_class="pseudo",
            is_target=True,
        ))
    return records
