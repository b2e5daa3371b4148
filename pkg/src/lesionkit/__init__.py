"""Explainable skin-lesion image classification toolkit.

Subpackages: :mod:`lesionkit.imageops` (images and augmentation),
:mod:`lesionkit.dataset` (manifests and splits), :mod:`lesionkit.classifier`
(reference CNN), :mod:`lesionkit.metrics` (metrics and intervals),
:mod:`lesionkit.explain` (LIME, CAM, segmentation) and :mod:`lesionkit.cli`.
"""

__version__ = "0.1.0"
