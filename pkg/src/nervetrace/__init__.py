"""Ultrasound nerve annotation toolkit: box tracking, contour refinement,
dataset management, augmentation, splitting, and evaluation, with an HTTP
service for interactive review."""

from .augment import AugmentConfig, AugmentParams, augment, gamma_transform
from .contours import GacParams, default_proposal_grid, inverse_gaussian_gradient, morph_gac
from .errors import (
    EmptyReportError,
    EmptyVideoError,
    GeometryError,
    IngestError,
    MaskError,
    MetadataError,
    NerveTraceError,
    ParamError,
    SeedError,
    StateError,
)
from .geometry import BoundingBox
from .metrics import (
    MetricsConfig,
    classify_frame,
    derive_min_area,
    dice,
    evaluate_dataset,
    filter_small_components,
    iou,
    normalize_resolution,
    pr_curve,
)
from .sessions import AnnotationSession, fuse_boxes, replay_session
from .splits import SplitSpec, stratified_kfold
from .store import DatasetStore, FrameLabel, PatientMeta, VideoRecord
from .tracking import KcfParams, kcf_init, kcf_step

__version__ = "0.1.0"

__all__ = [
    "AnnotationSession",
    "AugmentConfig",
    "AugmentParams",
    "BoundingBox",
    "DatasetStore",
    "EmptyReportError",
    "EmptyVideoError",
    "FrameLabel",
    "GacParams",
    "GeometryError",
    "IngestError",
    "KcfParams",
    "MaskError",
    "MetadataError",
    "MetricsConfig",
    "NerveTraceError",
    "ParamError",
    "PatientMeta",
    "SeedError",
    "SplitSpec",
    "StateError",
    "VideoRecord",
    "augment",
    "classify_frame",
    "default_proposal_grid",
    "derive_min_area",
    "dice",
    "evaluate_dataset",
    "filter_small_components",
    "fuse_boxes",
    "gamma_transform",
    "inverse_gaussian_gradient",
    "iou",
    "kcf_init",
    "kcf_step",
    "morph_gac",
    "normalize_resolution",
    "pr_curve",
    "replay_session",
    "stratified_kfold",
]
