"""Voxel- and lesion-level evaluation toolkit for 3D segmentation masks."""

__version__ = "0.1.0"

from .dataset_split import (
    ScanRecord,
    SplitIntegrityError,
    SplitResult,
    quantile_bins,
    read_split_manifest,
    stratified_group_split,
    verify_split,
)
from .error_analysis import (
    PhenotypeAtlas,
    classify_component,
    load_atlas,
    log_volume_histogram,
    typed_error_table,
    volume_summary,
)
from .feature_space import (
    FeatureTensor,
    FeatureVector,
    PcaModel,
    pca_fit,
    pca_project,
    pearson,
    quantile_transform,
    read_feature_file,
    reduce_tensor,
    stack_folds,
    write_feature_file,
)
from .labeling import CONNECTIVITIES, LabelMap, label_components, neighbor_offsets, warm_up
from .lesion_metrics import (
    AggregateRow,
    LesionMatchResult,
    aggregate,
    aggregate_values,
    detection_metrics,
    match_lesions,
)
from .pipeline import PairRecord, read_pairs_manifest, run_evaluation
from .stats import (
    FdrResult,
    TestResult,
    bh_fdr,
    kruskal_wallis,
    mann_whitney_u,
    significance_stars,
    wilcoxon_signed_rank,
)
from .volume_io import (
    GeometryMismatchError,
    MalformedHeaderError,
    MaskVolume,
    NiftiParseError,
    TruncatedPayloadError,
    UnsupportedDatatypeError,
    VolumeHeader,
    load_mask,
    save_labels,
    save_mask,
    validate_pair,
)
from .voxel_metrics import ConfusionCounts, confusion_counts, dsc, ndsc, reference_fraction

__all__ = [
    "__version__",
    "AggregateRow",
    "CONNECTIVITIES",
    "ConfusionCounts",
    "FdrResult",
    "FeatureTensor",
    "FeatureVector",
    "GeometryMismatchError",
    "LabelMap",
    "LesionMatchResult",
    "MalformedHeaderError",
    "MaskVolume",
    "NiftiParseError",
    "PairRecord",
    "PcaModel",
    "PhenotypeAtlas",
    "ScanRecord",
    "SplitIntegrityError",
    "SplitResult",
    "TestResult",
    "TruncatedPayloadError",
    "UnsupportedDatatypeError",
    "VolumeHeader",
    "aggregate",
    "aggregate_values",
    "bh_fdr",
    "classify_component",
    "confusion_counts",
    "detection_metrics",
    "dsc",
    "kruskal_wallis",
    "label_components",
    "load_atlas",
    "load_mask",
    "log_volume_histogram",
    "mann_whitney_u",
    "match_lesions",
    "ndsc",
    "neighbor_offsets",
    "pca_fit",
    "pca_project",
    "pearson",
    "quantile_bins",
    "quantile_transform",
    "read_feature_file",
    "read_pairs_manifest",
    "read_split_manifest",
    "reduce_tensor",
    "reference_fraction",
    "run_evaluation",
    "save_labels",
    "save_mask",
    "significance_stars",
    "stack_folds",
    "stratified_group_split",
    "typed_error_table",
    "validate_pair",
    "verify_split",
    "volume_summary",
    "warm_up",
    "wilcoxon_signed_rank",
    "write_feature_file",
]
