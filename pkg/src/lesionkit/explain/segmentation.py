"""Manual-threshold ROI segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SegmentationConfig:
    """Keep pixels whose selected intensity lies in [lo, hi].

    ``channel=None`` thresholds the mean over channels.
    """

    lo: float
    hi: float
    channel: int | None = None

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"lower bound {self.lo} exceeds upper bound {self.hi}")


@dataclass(frozen=True)
class SegmentationResult:
    mask: np.ndarray
    roi: tuple[int, int, int, int] | None  # (top, left, bottom, right), end-exclusive
    segmented: np.ndarray

    def to_dict(self) -> dict:
        return {"roi": list(self.roi) if self.roi else None,
                "mask_pixels": int(self.mask.sum()),
                "mask_fraction": float(self.mask.mean())}


def _select(img: np.ndarray, channel: int | None) -> np.ndarray:
    if img.ndim == 2:
        return img
    if channel is None:
        return img.mean(axis=2)
    if not 0 <= channel < img.shape[2]:
        raise ValueError(f"channel {channel} out of range for {img.shape[2]} channels")
    return img[:, :, channel]


def bounding_box(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def threshold_segment(img, config: SegmentationConfig) -> SegmentationResult:
    """Mask, tight bounding box, and the masked image cropped to that box.

    An empty mask yields ``roi=None`` and a 0x0 segmented image.
    """
    img = np.asarray(img, dtype=np.float64)
    sel = _select(img, config.channel)
    mask = ((sel >= config.lo) & (sel <= config.hi)).astype(np.uint8)
    roi = bounding_box(mask)
    masked = img * (mask[:, :, None] if img.ndim == 3 else mask)
    if roi is None:
        segmented = masked[:0, :0]
    else:
        t, l, b, r = roi
        segmented = masked[t:b, l:r]
    return SegmentationResult(mask, roi, segmented)


def roi_panel(img, roi, color=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Copy of ``img`` with the ROI outlined (1-pixel border)."""
    out = np.array(img, dtype=np.float64)
    if out.ndim == 2:
        out = out[:, :, None]
    if out.shape[2] == 1:
        out = np.repeat(out, 3, axis=2)
    if roi is None:
        return out
    t, l, b, r = roi
    c = np.asarray(color)
    out[t, l:r] = c
    out[b - 1, l:r] = c
    out[t:b, l] = c
    out[t:b, r - 1] = c
    return out
