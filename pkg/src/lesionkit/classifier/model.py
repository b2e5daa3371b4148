"""Reference CNN: 3x3 conv/ReLU/2x2 max-pool blocks, global average pooling, softmax head.

Activations are NHWC. Conv weights are stored as ``(out, in, 3, 3)``; the
head weight is ``(features, classes)`` so column ``k`` holds the per-channel
weights that class activation maps use.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .. import kernels

PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


class LabelError(ValueError):
    pass


class BlackBoxClassifier(Protocol):
    """Anything that maps a batch of images to rows of class probabilities."""

    class_names: Sequence[str]

    def predict(self, images) -> np.ndarray: ...


def param_shapes(input_shape, channels, n_classes) -> dict[str, tuple[int, ...]]:
    shapes = {}
    c_in = input_shape[2]
    for i, c_out in enumerate(channels):
        shapes[f"conv{i}.weight"] = (c_out, c_in, 3, 3)
        shapes[f"conv{i}.bias"] = (c_out,)
        c_in = c_out
    shapes["head.weight"] = (c_in, n_classes)
    shapes["head.bias"] = (n_classes,)
    return shapes


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class ReferenceCnn:
    """Small GAP classifier. Build one with :meth:`create`."""

    input_shape: tuple[int, int, int]
    channels: tuple[int, ...]
    class_names: tuple[str, ...]
    params: dict[str, np.ndarray] = field(repr=False)
    dtype: str = "float32"

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.channels = tuple(int(v) for v in self.channels)
        self.class_names = tuple(self.class_names)
        h, w, c = self.input_shape
        if c not in (1, 3):
            raise ShapeError(f"input must have 1 or 3 channels, got {c}")
        if not self.channels or min(h, w) >> len(self.channels) < 1:
            raise ShapeError(f"input {h}x{w} is too small for {len(self.channels)} pooling stages")
        if len(self.class_names) < 2:
            raise ShapeError("need at least two classes")
        expected = param_shapes(self.input_shape, self.channels, len(self.class_names))
        if list(self.params) != list(expected):
            raise ShapeError(f"parameter blocks {list(self.params)} do not match {list(expected)}")
        for name, shape in expected.items():
            p = np.ascontiguousarray(self.params[name], dtype=self.dtype)
            if p.shape != shape:
                raise ShapeError(f"{name} has shape {p.shape}, expected {shape}")
            if not np.all(np.isfinite(p)):
                raise ShapeError(f"{name} contains non-finite values")
            self.params[name] = p

    @classmethod
    def create(cls, class_names=("0", "1"), input_shape=(64, 64, 3), channels=(16, 32, 64),
               seed: int = 0, dtype: str = "float32") -> ReferenceCnn:
        """He-uniform weights (bound ``sqrt(6 / fan_in)``) and zero biases."""
        rng = np.random.default_rng(seed)
        shapes = param_shapes(input_shape, channels, len(class_names))
        params = {}
        for name, shape in shapes.items():
            if name.endswith(".bias"):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
                params[name] = _he_uniform(rng, shape, fan_in, dtype)
        return cls(tuple(input_shape), tuple(channels), tuple(class_names), params, dtype)

    @property
    def conv_param_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("conv")]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> ReferenceCnn:
        return copy.deepcopy(self)

    def reinit_head(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        w = self.params["head.weight"]
        self.params["head.weight"] = _he_uniform(rng, w.shape, w.shape[0], self.dtype)
        self.params["head.bias"] = np.zeros_like(self.params["head.bias"])

    def predict(self, images, batch_size: int = 64) -> np.ndarray:
        x = self._as_batch(images)
        rows = [forward(self, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(rows, axis=0) if rows else np.zeros((0, len(self.class_names)))

    def _as_batch(self, images) -> np.ndarray:
        x = np.asarray(images)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"batch shape {x.shape} does not match model input {self.input_shape}")
        return np.ascontiguousarray(x, dtype=self.dtype)


def _conv_block(x, weight, bias):
    n, h, w, c = x.shape
    f = weight.shape[0]
    cols = kernels.im2col3x3(x)
    z = cols @ weight.reshape(f, c * 9).T
    z += bias
    z = z.reshape(n, h, w, f)
    a = np.maximum(z, 0)
    pooled, idx = kernels.maxpool2x2(a)
    return pooled, (cols, z, idx, x.shape)


def _features(model: ReferenceCnn, x):
    caches = []
    for i in range(len(model.channels)):
        x, cache = _conv_block(x, model.params[f"conv{i}.weight"], model.params[f"conv{i}.bias"])
        caches.append(cache)
    return x, caches


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def feature_maps(model: ReferenceCnn, images) -> np.ndarray:
    """Final conv-block activations (N, h, w, F): the maps that feed global pooling."""
    maps, _ = _features(model, model._as_batch(images))
    return maps


def logits(model: ReferenceCnn, images) -> np.ndarray:
    maps = feature_maps(model, images)
    gap = maps.mean(axis=(1, 2))
    return gap @ model.params["head.weight"] + model.params["head.bias"]


def forward(model: ReferenceCnn, images) -> np.ndarray:
    """Class-probability rows (float64) for a batch of images."""
    return softmax(logits(model, images))


def cross_entropy(probabilities, labels) -> float:
    """Mean ``-log p[label]`` with probabilities clamped below at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ShapeError(f"probabilities {p.shape} and labels {y.shape} are inconsistent")
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise LabelError(f"labels must lie in [0, {p.shape[1]})")
    picked = p[np.arange(len(y)), y.astype(np.intp)]
    return float(np.mean(-np.log(np.maximum(picked, PROB_CLAMP))))


def loss_and_gradients(model: ReferenceCnn, images, labels, freeze_conv: bool = False):
    """Mean cross-entropy and its gradient for every parameter block.

    With ``freeze_conv`` the conv blocks get all-zero gradients and their
    backward pass is skipped.
    """
    x = model._as_batch(images)
    y = np.asarray(labels, dtype=np.intp)
    k = len(model.class_names)
    if y.shape != (x.shape[0],):
        raise ShapeError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} images")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise LabelError(f"labels must lie in [0, {k})")
    n = x.shape[0]
    maps, caches = _features(model, x)
    _, h, w, f = maps.shape
    gap = maps.mean(axis=(1, 2))
    probs = softmax(gap @ model.params["head.weight"] + model.params["head.bias"])
    loss = cross_entropy(probs, y)

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits = (dlogits / n).astype(model.dtype)
    grads = {name: np.zeros_like(p) for name, p in model.params.items()}
    grads["head.weight"] = gap.T @ dlogits
    grads["head.bias"] = dlogits.sum(axis=0)
    if freeze_conv:
        return loss, grads

    dgap = dlogits @ model.params["head.weight"].T
    dx = np.broadcast_to((dgap / (h * w))[:, None, None, :], maps.shape)
    dx = np.ascontiguousarray(dx, dtype=model.dtype)
    for i in reversed(range(len(model.channels))):
        cols, z, idx, in_shape = caches[i]
        bn, bh, bw, bc = in_shape
        weight = model.params[f"conv{i}.weight"]
        fo = weight.shape[0]
        da = kernels.maxpool2x2_backward(dx, idx, bh, bw)
        dz = (da * (z > 0)).reshape(-1, fo)
        grads[f"conv{i}.weight"] = (dz.T @ cols).reshape(weight.shape)
        grads[f"conv{i}.bias"] = dz.sum(axis=0)
        if i > 0:
            dcols = np.ascontiguousarray(dz @ weight.reshape(fo, bc * 9))
            dx = kernels.col2im3x3(dcols, bn, bh, bw, bc)
    return loss, grads


def gradients(model: ReferenceCnn, images, labels, freeze_conv: bool = False) -> dict[str, np.ndarray]:
    return loss_and_gradients(model, images, labels, freeze_conv)[1]
