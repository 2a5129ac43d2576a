"""Segment-wise quality estimation for semantic-segmentation softmax outputs.

The pipeline merges probability fields from nested centered image crops,
derives pixel-wise dispersion heat maps, aggregates them over predicted
segments, and trains meta models that predict each segment's adjusted IoU
without ground truth.
"""

from .crop_pyramid import (
    CropPyramid,
    bilinear_resize,
    build_pyramid,
    crop_shape,
    kernel,
    restrict,
    simulate_crop_fields,
)
from .dispersion import (
    HEATMAP_NAMES,
    compute_heatmaps,
    crop_mean_var,
    entropy_map,
    kl_map,
    margin_map,
    variation_ratio_map,
)
from .errors import DegenerateError, FormatError, GeometryError, NestedMetasegError, ValidationError
from .metrics import (
    MetricsTable,
    SegmentRecord,
    extract_records,
    feature_catalog,
    named_feature_sets,
    pearson_correlations,
)
from .meta import (
    EvalReport,
    MetaModel,
    accuracy,
    auroc,
    evaluate,
    fit_linear,
    fit_logistic,
    fit_mlp,
    greedy_select,
    run_protocol,
    split_resample,
)
from .segmentation import IoUResult, SegmentMap, compute_iou, connected_components, predict_labels
from .synth import SynthConfig, generate_scene, write_dataset
from .tensor_io import (
    IGNORE,
    DatasetManifest,
    ManifestEntry,
    load_heat_map,
    load_label_map,
    load_manifest,
    load_probability_field,
    save_heat_map,
    save_label_map,
    save_manifest,
    save_probability_field,
)

__version__ = "0.1.0"

__all__ = [
    "CropPyramid",
    "DatasetManifest",
    "DegenerateError",
    "EvalReport",
    "FormatError",
    "GeometryError",
    "HEATMAP_NAMES",
    "IGNORE",
    "IoUResult",
    "ManifestEntry",
    "MetaModel",
    "MetricsTable",
    "NestedMetasegError",
    "SegmentMap",
    "SegmentRecord",
    "SynthConfig",
    "ValidationError",
    "accuracy",
    "auroc",
    "bilinear_resize",
    "build_pyramid",
    "compute_heatmaps",
    "compute_iou",
    "connected_components",
    "crop_mean_var",
    "crop_shape",
    "entropy_map",
    "evaluate",
    "extract_records",
    "feature_catalog",
    "fit_linear",
    "fit_logistic",
    "fit_mlp",
    "generate_scene",
    "greedy_select",
    "kernel",
    "kl_map",
    "load_heat_map",
    "load_label_map",
    "load_manifest",
    "load_probability_field",
    "margin_map",
    "named_feature_sets",
    "pearson_correlations",
    "predict_labels",
    "restrict",
    "run_protocol",
    "save_heat_map",
    "save_label_map",
    "save_manifest",
    "save_probability_field",
    "simulate_crop_fields",
    "split_resample",
    "variation_ratio_map",
    "write_dataset",
]
