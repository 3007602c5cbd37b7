"""specshift: anomaly-detection benchmarking under specification changes.

The toolkit builds paired "changed" / "standard" views of an inspection
dataset (a defect class redefined as acceptable, or a pseudo-defect class
redefined as defective), trains a classical patch-feature detector under
either view, and measures how well the detector tracked the change with
S-AUROC alongside the standard image/pixel AUROC and region-overlap
metrics. A re-paste training augmentation feeds confidently flagged regions
back through the training stream.
"""

__version__ = "0.1.0"

from .core import (
    AnomalyMap,
    Image,
    PixelMask,
    SampleRecord,
    ScoredSample,
    ScoreSet,
    binarize_map,
    validate_image,
)
from .dataset_io import (
    DatasetIndex,
    DefectClassStat,
    DefectSpec,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    read_image,
    read_mask,
    resize_bilinear,
    write_image,
    write_mask,
)
from .detector import DetectorModel, ModelConfig, TrainConfig, extract_patches, fit, load_model, save_model, score
from .metrics import (
    MetricsReport,
    SAurocReport,
    auroc,
    evaluate_manifest,
    pixel_auroc,
    pro,
    s_auroc,
)
from .pseudo import PseudoSpec, apply_pseudo, generate_mask, generate_pseudo_set
from .repaste import RepasteConfig, extract_mask, repaste, repaste_chain
from .scenario import (
    ManifestError,
    ScenarioManifest,
    build_a2n,
    build_n2a,
    read_manifest,
    select_targets,
    validate_manifest,
    write_manifest,
)

__all__ = [
    "AnomalyMap",
    "DatasetIndex",
    "DefectClassStat",
    "DefectSpec",
    "DetectorModel",
    "Image",
    "ManifestError",
    "MetricsReport",
    "ModelConfig",
    "PixelMask",
    "PseudoSpec",
    "RepasteConfig",
    "SAurocReport",
    "SampleRecord",
    "ScenarioManifest",
    "ScoreSet",
    "ScoredSample",
    "SyntheticSpec",
    "TrainConfig",
    "apply_pseudo",
    "auroc",
    "binarize_map",
    "build_a2n",
    "build_n2a",
    "evaluate_manifest",
    "extract_mask",
    "extract_patches",
    "fit",
    "generate_mask",
    "generate_pseudo_set",
    "generate_synthetic",
    "load_dataset",
    "load_model",
    "pixel_auroc",
    "pro",
    "read_image",
    "read_manifest",
    "read_mask",
    "repaste",
    "repaste_chain",
    "resize_bilinear",
    "s_auroc",
    "save_model",
    "score",
    "select_targets",
    "validate_image",
    "validate_manifest",
    "write_image",
    "write_manifest",
    "write_mask",
]
