"""Image representation, resizing and affine augmentation.

Images are ``float64`` arrays of shape ``(height, width, channels)`` with
values in [0, 1]. Geometry uses point coordinates ``(x, y)`` where ``x`` is
the column and ``y`` the row; every transform acts about the image center
``((W - 1) / 2, (H - 1) / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels

__all__ = [
    "AffineTransform", "AugmentationPolicy", "ImageFormatError", "InvalidTransformError",
    "PolicyError", "apply_affine", "as_image", "augment", "augment_batch",
    "flip_horizontal", "load_image", "resize_bilinear", "sample_augmentation", "save_image",
]

MAX_SHEAR = 0.2


class ImageFormatError(ValueError):
    """Raised when a file is not a decodable PNG/JPEG or an array is not an image."""


class InvalidTransformError(ValueError):
    pass


class PolicyError(ValueError):
    pass


def as_image(data, *, copy: bool = False) -> np.ndarray:
    """Validate and coerce ``data`` into an (H, W, C) float64 image in [0, 1].

    2-D input is treated as a single-channel image.
    """
    arr = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageFormatError(f"expected an (H, W, 1|3) image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ImageFormatError("image intensities must be finite and within [0, 1]")
    return np.ascontiguousarray(arr)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to ``size = (height, width)``.

    Sample positions use the half-pixel convention
    ``src = (dst + 0.5) * in / out - 0.5``, clamped to the source grid.
    """
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    out_h, out_w = int(size[0]), int(size[1])
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {size}")
    y0, y1, fy = _axis_weights(img.shape[0], out_h)
    x0, x1, fx = _axis_weights(img.shape[1], out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def load_image(path, target_size: tuple[int, int] | None = None) -> np.ndarray:
    """Read a PNG/JPEG as a 3-channel image in [0, 1], optionally resized to (height, width)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ImageFormatError(f"{path}: unsupported image format {im.format}")
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: cannot decode image") from exc
    if target_size is not None and tuple(target_size) != rgb.shape[:2]:
        rgb = resize_bilinear(rgb, target_size)
    return np.clip(rgb, 0.0, 1.0)


def save_image(path, img: np.ndarray) -> None:
    """Write an image as 8-bit PNG using ``round(255 * v)``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(Path(path), format="PNG")


@dataclass(frozen=True)
class AffineTransform:
    """``p -> matrix @ (p - c) + c + translation`` for image center ``c``."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(2))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(2, 2)
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(t))):
            raise InvalidTransformError("transform entries must be finite")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> AffineTransform:
        return cls()

    @classmethod
    def scaling(cls, sx: float, sy: float) -> AffineTransform:
        return cls(np.array([[sx, 0.0], [0.0, sy]]))

    @classmethod
    def rotation(cls, degrees: float) -> AffineTransform:
        t = math.radians(degrees)
        c, s = math.cos(t), math.sin(t)
        return cls(np.array([[c, -s], [s, c]]))

    @classmethod
    def shear(cls, s: float) -> AffineTransform:
        return cls(np.array([[1.0, s], [0.0, 1.0]]))

    @classmethod
    def translate(cls, tx: float, ty: float) -> AffineTransform:
        return cls(np.eye(2), np.array([tx, ty]))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def then(self, other: AffineTransform) -> AffineTransform:
        """The transform that applies ``self`` first and ``other`` second."""
        return AffineTransform(other.matrix @ self.matrix,
                               other.matrix @ self.translation + other.translation)

    def inverse(self) -> AffineTransform:
        if abs(self.det) <= 1e-9:
            raise InvalidTransformError(f"transform is singular (det={self.det:.3g})")
        inv = np.linalg.inv(self.matrix)
        return AffineTransform(inv, -inv @ self.translation)

    def apply_points(self, points, center=(0.0, 0.0)) -> np.ndarray:
        """Map an (N, 2) array of (x, y) points about ``center``."""
        p = np.asarray(points, dtype=np.float64)
        c = np.asarray(center, dtype=np.float64)
        return (p - c) @ self.matrix.T + c + self.translation


def image_center(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    return np.array([(w - 1) / 2.0, (h - 1) / 2.0])


def apply_affine(img: np.ndarray, transform: AffineTransform, fill: float = 0.0) -> np.ndarray:
    """Warp ``img`` by ``transform`` with inverse mapping and bilinear sampling.

    Output keeps the input shape; reads outside the source return ``fill``.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim == 2:
        return apply_affine(img[:, :, None], transform, fill)[:, :, 0]
    inv = transform.inverse()
    c = image_center(img)
    # src = inv.matrix @ (dst - c) + c + inv.translation
    offset = c - inv.matrix @ c + inv.translation
    out = kernels.warp_bilinear(img, inv.matrix, offset, float(fill))
    return np.clip(out, 0.0, 1.0)


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def _check_interval(name: str, rng: Sequence[float], lo: float, hi: float, *,
                    hi_open: bool = False) -> tuple[float, float]:
    a, b = (float(v) for v in rng)
    if not (math.isfinite(a) and math.isfinite(b)) or a > b:
        raise PolicyError(f"{name} must be an ordered pair, got {rng!r}")
    if a < lo or b > hi or (hi_open and a >= hi):
        bound = f"[{lo}, {hi})" if hi_open else f"[{lo}, {hi}]"
        raise PolicyError(f"{name} {rng!r} must lie within {bound}")
    return a, b


@dataclass(frozen=True)
class AugmentationPolicy:
    """Random flip/rotate/shear/scale/translate settings.

    Unstated magnitudes default to scale in [0.8, 1.2] and translation up to
    10% of the image size. Shear is limited to [0, 0.2].
    """

    flip_horizontal_prob: float = 0.5
    flip_vertical_prob: float = 0.0
    rotation_range: tuple[float, float] = (0.0, 360.0)
    shear_range: tuple[float, float] = (0.0, MAX_SHEAR)
    scale_range: tuple[float, float] = (0.8, 1.2)
    translate_fraction: float = 0.10
    fill_value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rotation_range",
                           _check_interval("rotation_range", self.rotation_range, 0.0, 360.0,
                                           hi_open=True))
        object.__setattr__(self, "shear_range",
                           _check_interval("shear_range", self.shear_range, 0.0, MAX_SHEAR))
        object.__setattr__(self, "scale_range",
                           _check_interval("scale_range", self.scale_range, 1e-3, 1e3))
        for name in ("flip_horizontal_prob", "flip_vertical_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise PolicyError(f"{name} must be a probability, got {p}")
        if not 0.0 <= self.translate_fraction <= 1.0:
            raise PolicyError(f"translate_fraction must lie in [0, 1], got {self.translate_fraction}")
        if not 0.0 <= self.fill_value <= 1.0:
            raise PolicyError(f"fill_value must lie in [0, 1], got {self.fill_value}")

    @classmethod
    def identity(cls, seed: int = 0) -> AugmentationPolicy:
        return cls(flip_horizontal_prob=0.0, rotation_range=(0.0, 0.0), shear_range=(0.0, 0.0),
                   scale_range=(1.0, 1.0), translate_fraction=0.0, seed=seed)

    @classmethod
    def from_dict(cls, d: dict) -> AugmentationPolicy:
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("rotation_range", "shear_range", "scale_range"):
            if k in known:
                known[k] = tuple(known[k])
        return cls(**known)


def sample_augmentation(policy: AugmentationPolicy, rng: np.random.Generator,
                        size: tuple[int, int] = (1, 1)) -> tuple[bool, AffineTransform]:
    """Draw one random augmentation.

    Draw order is fixed: horizontal flip, vertical flip, angle, shear, x/y
    scale, x/y shift. The matrix is ``scale @ shear @ rotation`` (rotation
    applied first), followed by the shift. ``size`` is (height, width) and
    only scales the shift.
    """
    flip = bool(rng.random() < policy.flip_horizontal_prob)
    vflip = bool(rng.random() < policy.flip_vertical_prob)
    theta = rng.uniform(*policy.rotation_range)
    s = rng.uniform(*policy.shear_range)
    sx = rng.uniform(*policy.scale_range)
    sy = rng.uniform(*policy.scale_range)
    h, w = size
    tx = rng.uniform(-1.0, 1.0) * policy.translate_fraction * w
    ty = rng.uniform(-1.0, 1.0) * policy.translate_fraction * h
    a = (AffineTransform.scaling(sx, sy).matrix @ AffineTransform.shear(s).matrix
         @ AffineTransform.rotation(theta).matrix)
    if vflip:
        a = np.diag([1.0, -1.0]) @ a
    return flip, AffineTransform(a, np.array([tx, ty]))


def augment(img: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    flip, transform = sample_augmentation(policy, rng, size=img.shape[:2])
    if flip:
        img = flip_horizontal(img)
    return apply_affine(img, transform, policy.fill_value)


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) tuple, e.g. one per image index."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])


def augment_batch(images: Sequence[np.ndarray], policy: AugmentationPolicy, *,
                  epoch: int = 0, threads: int = 1) -> list[np.ndarray]:
    """Augment each image with its own generator seeded by (policy.seed, epoch, index).

    The result does not depend on ``threads``.
    """
    def one(i):
        return augment(images[i], policy, child_rng(policy.seed, epoch, i))

    if threads <= 1:
        return [one(i) for i in range(len(images))]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(images))))
