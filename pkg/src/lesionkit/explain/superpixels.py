"""Superpixel segmentation: grid-seeded k-means over (intensity, y, x), SLIC style."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import kernels


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray
    n_segments: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 2:
            raise SegmentationError(f"labels must be 2-D, got shape {lab.shape}")
        counts = np.bincount(lab.ravel(), minlength=self.n_segments) if lab.size else np.zeros(0)
        if lab.min() < 0 or lab.max() >= self.n_segments or (counts[:self.n_segments] == 0).any():
            raise SegmentationError("every segment index in [0, d) must own at least one pixel")
        object.__setattr__(self, "labels", lab)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n_segments)

    def boundaries(self) -> np.ndarray:
        """Boolean map of pixels whose right or lower neighbour lies in another segment."""
        lab = self.labels
        edge = np.zeros(lab.shape, dtype=bool)
        edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
        edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
        return edge


def grid_shape(n_segments: int, height: int, width: int) -> tuple[int, int]:
    ny = max(1, min(height, int(round(np.sqrt(n_segments * height / width)))))
    nx = max(1, min(width, int(round(n_segments / ny))))
    return ny, nx


def grid_segments(shape: tuple[int, int], n_segments: int) -> SuperpixelMap:
    """Regular rectangular cells; useful as a predictable segmentation in tests."""
    h, w = shape[:2]
    ny, nx = grid_shape(n_segments, h, w)
    rows = (np.arange(h) * ny) // h
    cols = (np.arange(w) * nx) // w
    return SuperpixelMap(rows[:, None] * nx + cols[None, :], ny * nx)


def _intensity(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    return np.ascontiguousarray(arr.mean(axis=2) if arr.ndim == 3 else arr)


def slic_kmeans(intensity: np.ndarray, n_segments: int, compactness: float = 0.1,
                iterations: int = 10) -> tuple[np.ndarray, np.ndarray, float]:
    """Local k-means; returns (labels, centers used for those labels, grid step).

    The distance is ``((I - Ic) / compactness)^2 + (spatial / step)^2`` and
    each center only searches a window of +-2 steps.
    """
    h, w = intensity.shape
    ny, nx = grid_shape(n_segments, h, w)
    step = float(np.sqrt(h * w / (ny * nx)))
    cy = (np.arange(ny) + 0.5) * h / ny - 0.5
    cx = (np.arange(nx) + 0.5) * w / nx - 0.5
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    yy, xx = yy.ravel(), xx.ravel()
    ci = intensity[np.round(yy).astype(int), np.round(xx).astype(int)]
    centers = np.ascontiguousarray(np.stack([ci, yy, xx], axis=1))
    k = len(centers)
    gy, gx = np.mgrid[0:h, 0:w]
    labels = None
    for it in range(iterations):
        labels, _ = kernels.slic_assign(intensity, centers, step, compactness, 2.0 * step)
        missing = labels < 0
        if missing.any():
            d = (((intensity[missing][:, None] - centers[None, :, 0]) / compactness) ** 2
                 + ((gy[missing][:, None] - centers[None, :, 1]) ** 2
                    + (gx[missing][:, None] - centers[None, :, 2]) ** 2) / step ** 2)
            labels[missing] = np.argmin(d, axis=1)
        if it == iterations - 1:
            break
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        new = np.empty_like(centers)
        for j, feat in enumerate((intensity.ravel(), gy.ravel(), gx.ravel())):
            sums = np.bincount(flat, weights=feat.astype(np.float64), minlength=k)
            new[:, j] = np.where(counts > 0, sums / np.maximum(counts, 1), centers[:, j])
        centers = np.ascontiguousarray(new)
    return labels, centers, step


def _relabel_first_seen(labels: np.ndarray) -> tuple[np.ndarray, int]:
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    lut = np.empty(flat.max() + 1, dtype=np.int64)
    lut[order] = np.arange(len(order))
    return lut[labels], len(order)


def enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Split segments into 4-connected pieces and merge pieces smaller than ``min_size``.

    A small piece joins the neighbouring piece it shares the longest border with.
    """
    comp = np.zeros(labels.shape, dtype=np.int64)
    next_id = 0
    for value in np.unique(labels):
        pieces, n = ndimage.label(labels == value)
        mask = pieces > 0
        comp[mask] = pieces[mask] - 1 + next_id
        next_id += n
    if next_id == 1:
        return comp
    sizes = np.bincount(comp.ravel(), minlength=next_id)
    for cid in np.argsort(sizes, kind="stable"):
        if sizes[cid] >= min_size or sizes[cid] == 0:
            continue
        region = comp == cid
        ring = ndimage.binary_dilation(region, structure=ndimage.generate_binary_structure(2, 1))
        ring &= ~region
        neighbours = comp[ring]
        if neighbours.size == 0:
            continue
        target = np.bincount(neighbours).argmax()
        comp[region] = target
        sizes[target] += sizes[cid]
        sizes[cid] = 0
    return comp


def superpixels(img, target_segments: int = 40, compactness: float = 0.1,
                iterations: int = 10, mode: str = "slic") -> SuperpixelMap:
    """Segment ``img`` into roughly ``target_segments`` contiguous superpixels.

    ``mode="grid"`` returns plain rectangular cells instead. Labels are
    numbered in raster order of first appearance.
    """
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    if not 1 <= target_segments <= h * w:
        raise SegmentationError(f"target_segments must lie in [1, {h * w}], got {target_segments}")
    if mode == "grid":
        return grid_segments((h, w), target_segments)
    if mode != "slic":
        raise SegmentationError(f"unknown superpixel mode {mode!r}")
    if compactness <= 0 or iterations < 1:
        raise SegmentationError("compactness must be positive and iterations >= 1")
    labels, _, _ = slic_kmeans(_intensity(arr), target_segments, compactness, iterations)
    min_size = max(1, (h * w) // (4 * target_segments))
    labels, d = _relabel_first_seen(enforce_connectivity(labels, min_size))
    return SuperpixelMap(labels, d)
