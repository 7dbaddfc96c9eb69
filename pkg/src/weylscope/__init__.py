"""Conformal analysis of Riemannian metrics through the kernel of the Weyl tensor."""

__version__ = "0.1.0"

from .dsl import MetricDefinition, load_metric, parse_metric, render_metric  # noqa: E402
from .curvature import curvature_at, curvature_bundle  # noqa: E402
from .frame import degeneracy_survey, frame_at, weyl_kernel  # noqa: E402
from .detect import (  # noqa: E402
    ClassifyConfig,
    classify,
    cspace_transform_check,
    listing_candidate,
    mean_curvature_transform_check,
    rank1_candidate,
    rank_k_candidate,
    sasaki_check,
    verify_conformal_einstein,
)

__all__ = [
    "__version__", "MetricDefinition", "load_metric", "parse_metric", "render_metric",
    "curvature_at", "curvature_bundle", "degeneracy_survey", "frame_at", "weyl_kernel",
    "ClassifyConfig", "classify", "cspace_transform_check", "listing_candidate",
    "mean_curvature_transform_check", "rank1_candidate", "rank_k_candidate", "sasaki_check",
    "verify_conformal_einstein",
]
