"""Class activation maps for global-average-pooling classifiers, and heatmap overlays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..classifier.model import ReferenceCnn, feature_maps, forward
from ..imageops import resize_bilinear


class UnsupportedModelError(TypeError):
    pass


@dataclass(frozen=True)
class CamHeatmap:
    values: np.ndarray
    class_name: str
    class_index: int
    raw: np.ndarray


def activation_map(maps: np.ndarray, head_weight: np.ndarray, class_index: int) -> np.ndarray:
    """``sum_k head_weight[k, class] * maps[..., k]`` for (h, w, K) feature maps."""
    maps = np.asarray(maps, dtype=np.float64)
    wk = np.asarray(head_weight, dtype=np.float64)[:, class_index]
    return maps @ wk


def normalize(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= 0:
        return np.zeros_like(raw, dtype=np.float64)
    return (raw - lo) / (hi - lo)


def cam_raw(model, img, class_index: int) -> np.ndarray:
    if not isinstance(model, ReferenceCnn):
        raise UnsupportedModelError(
            f"{type(model).__name__} has no global-average-pooling head to build a CAM from")
    maps = feature_maps(model, img)[0]
    return activation_map(maps, model.params["head.weight"], class_index)


def cam(model, img, class_index: int | None = None) -> CamHeatmap:
    """Heatmap for ``class_index`` (default: the predicted class), upsampled to the image and scaled to [0, 1]."""
    img = np.asarray(img)
    if class_index is None:
        if not isinstance(model, ReferenceCnn):
            raise UnsupportedModelError(f"{type(model).__name__} is not a GAP classifier")
        class_index = int(np.argmax(forward(model, img[None])[0]))
    raw = cam_raw(model, img, class_index)
    up = resize_bilinear(raw, img.shape[:2])
    return CamHeatmap(normalize(up), model.class_names[class_index], class_index, raw)


# blue -> cyan -> yellow -> red
_STOPS = np.array([0.0, 1 / 3, 2 / 3, 1.0])
_COLORS = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


def colormap(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.stack([np.interp(v, _STOPS, _COLORS[:, c]) for c in range(3)], axis=-1)


def overlay(img, heatmap: CamHeatmap | np.ndarray, opacity: float = 0.4) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    values = heatmap.values if isinstance(heatmap, CamHeatmap) else np.asarray(heatmap)
    if values.shape != img.shape[:2]:
        raise ValueError(f"heatmap {values.shape} does not match image {img.shape[:2]}")
    if not 0.0 <= opacity <= 1.0:
        raise ValueError(f"opacity must lie in [0, 1], got {opacity}")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return (1.0 - opacity) * img + opacity * colormap(values)
