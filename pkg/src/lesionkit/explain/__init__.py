"""Explanations: LIME superpixel surrogates, class activation maps, threshold ROI segmentation."""

from .cam import CamHeatmap, UnsupportedModelError, activation_map, cam, cam_raw, colormap, overlay
from .lime import (LimeConfig, LimeError, LimeExplanation, RankError, cosine_distance_to_original,
                   fit_weighted_ridge, kernel_weight, lime_explain, perturb_image, rank_segments,
                   sample_perturbations)
from .segmentation import (SegmentationConfig, SegmentationResult, bounding_box, roi_panel,
                           threshold_segment)
from .superpixels import (SegmentationError, SuperpixelMap, enforce_connectivity, grid_segments,
                          slic_kmeans, superpixels)

__all__ = [
    "CamHeatmap", "LimeConfig", "LimeError", "LimeExplanation", "RankError", "SegmentationConfig",
    "SegmentationError", "SegmentationResult", "SuperpixelMap", "UnsupportedModelError",
    "activation_map", "bounding_box", "cam", "cam_raw", "colormap", "cosine_distance_to_original",
    "enforce_connectivity", "fit_weighted_ridge", "grid_segments", "kernel_weight",
    "lime_explain", "overlay", "perturb_image", "rank_segments", "roi_panel",
    "sample_perturbations", "slic_kmeans", "superpixels", "threshold_segment",
]
