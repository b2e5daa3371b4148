"""LIME for images: perturb superpixels, weight by cosine proximity, fit a ridge surrogate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .superpixels import SuperpixelMap, superpixels


class RankError(np.linalg.LinAlgError):
    pass


class LimeError(RuntimeError):
    pass


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 150
    kernel_width: float = 0.2
    top_k: int = 4
    ridge_lambda: float = 1e-3
    target_segments: int = 40
    compactness: float = 0.1
    off_color: str = "mean"
    rank_by: str = "signed"
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not self.kernel_width > 0:
            raise ValueError("kernel_width must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.off_color not in ("mean", "black"):
            raise ValueError("off_color must be 'mean' or 'black'")
        if self.rank_by not in ("signed", "abs"):
            raise ValueError("rank_by must be 'signed' or 'abs'")


@dataclass
class LimeExplanation:
    coefficients: np.ndarray
    intercept: float
    target_class: str
    target_index: int
    kernel_weights: np.ndarray
    top_k_segments: list[int]
    mask_image: np.ndarray
    segments: SuperpixelMap
    perturbations: np.ndarray = field(repr=False)
    responses: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        w = self.kernel_weights
        return {
            "target_class": self.target_class,
            "target_index": self.target_index,
            "n_segments": self.segments.n_segments,
            "segment_sizes": self.segments.sizes.tolist(),
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "top_k_segments": [int(s) for s in self.top_k_segments],
            "num_samples": int(len(w)),
            "kernel": {"min": float(w.min()), "max": float(w.max()), "mean": float(w.mean()),
                       "effective_samples": float(w.sum() ** 2 / np.sum(w * w))},
        }


def sample_perturbations(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` x ``d`` 0/1 matrix; row 0 is all ones (the unperturbed image), the rest fair coin flips."""
    if d < 1 or n < 1:
        raise ValueError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    z = np.ones((n, d), dtype=np.int8)
    if n > 1:
        z[1:] = rng.integers(0, 2, size=(n - 1, d), dtype=np.int8)
    return z


def _fill_color(img: np.ndarray, off_color) -> np.ndarray:
    if isinstance(off_color, str):
        if off_color == "black":
            return np.zeros(img.shape[2])
        if off_color == "mean":
            return img.reshape(-1, img.shape[2]).mean(axis=0)
        raise ValueError(f"unknown off_color {off_color!r}")
    return np.broadcast_to(np.asarray(off_color, dtype=np.float64), (img.shape[2],))


def perturb_image(img, segments: SuperpixelMap, z, off_color="mean") -> np.ndarray:
    """Keep segments with ``z == 1``; paint the others with ``off_color``."""
    img = np.asarray(img, dtype=np.float64)
    z = np.asarray(z)
    if z.shape != (segments.n_segments,):
        raise ValueError(f"perturbation has length {z.size}, map has {segments.n_segments} segments")
    keep = z.astype(bool)[segments.labels]
    out = img.copy()
    out[~keep] = _fill_color(img, off_color)
    return out


def cosine_distance_to_original(z) -> np.ndarray:
    """``1 - cos(z, ones)`` per row, which is ``1 - sqrt(k/d)``; all-zero rows give 1."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    d = z.shape[1]
    return 1.0 - np.sqrt(z.sum(axis=1) / d)


def kernel_weight(z, kernel_width: float = 0.2):
    """``exp(-distance^2 / width^2)``; a scalar for one vector, an array for a matrix."""
    dist = cosine_distance_to_original(z)
    w = np.exp(-(dist ** 2) / kernel_width ** 2)
    return float(w[0]) if np.ndim(z) == 1 else w


def fit_weighted_ridge(Z, y, w, lam: float = 1e-3) -> tuple[np.ndarray, float]:
    """Minimise ``sum w_i (y_i - b0 - Z_i . b)^2 + lam * |b|^2`` (intercept unpenalised).

    Solved through the normal equations of the intercept-augmented system.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, d = Z.shape
    if n < 2 or y.shape != (n,) or w.shape != (n,):
        raise ValueError("need at least two samples and matching y/w lengths")
    if (w < 0).any() or not (w > 0).any():
        raise ValueError("weights must be nonnegative with at least one positive")
    X = np.hstack([np.ones((n, 1)), Z])
    A = X.T @ (X * w[:, None])
    A[np.arange(1, d + 1), np.arange(1, d + 1)] += lam
    b = X.T @ (w * y)
    if lam == 0 and np.linalg.matrix_rank(A) < d + 1:
        raise RankError("weighted design is rank deficient; use ridge_lambda > 0")
    try:
        beta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise RankError(f"normal equations are singular ({exc}); use ridge_lambda > 0") from exc
    return beta[1:], float(beta[0])


def _predict_rows(classifier, images: np.ndarray, start: int) -> np.ndarray:
    try:
        return np.asarray(classifier.predict(images), dtype=np.float64)
    except Exception as exc:
        for i in range(len(images)):
            try:
                classifier.predict(images[i:i + 1])
            except Exception as inner:
                raise LimeError(f"classifier failed on perturbation sample {start + i}: "
                                f"{inner}") from inner
        raise LimeError(f"classifier failed on samples {start}..{start + len(images) - 1}: "
                        f"{exc}") from exc


def rank_segments(coefficients: np.ndarray, k: int, rank_by: str = "signed") -> list[int]:
    key = -np.abs(coefficients) if rank_by == "abs" else -coefficients
    return [int(i) for i in np.argsort(key, kind="stable")[:min(k, len(coefficients))]]


def lime_explain(classifier, img, config: LimeConfig = LimeConfig(),
                 segments: SuperpixelMap | None = None) -> LimeExplanation:
    """Explain the classifier's top class on ``img``.

    The response is the probability of the class predicted for the intact
    image. ``segments`` overrides the superpixel computation.
    """
    img = np.asarray(img, dtype=np.float64)
    if segments is None:
        segments = superpixels(img, config.target_segments, config.compactness)
    d = segments.n_segments
    if config.num_samples < d:
        warnings.warn(f"{config.num_samples} perturbations for {d} superpixels; "
                      "the surrogate fit leans on the ridge penalty", stacklevel=2)
    rng = np.random.default_rng(config.seed)
    Z = sample_perturbations(d, config.num_samples, rng)
    fill = _fill_color(img, config.off_color)

    probs = []
    for start in range(0, len(Z), config.batch_size):
        batch = np.stack([perturb_image(img, segments, z, fill)
                          for z in Z[start:start + config.batch_size]])
        probs.append(_predict_rows(classifier, batch, start))
    P = np.concatenate(probs, axis=0)
    if P.shape[0] != len(Z) or (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0, atol=1e-6):
        raise LimeError("classifier must return one probability row per image")

    target = int(np.argmax(P[0]))
    y = P[:, target]
    weights = kernel_weight(Z, config.kernel_width)
    coef, intercept = fit_weighted_ridge(Z, y, weights, config.ridge_lambda)
    top = rank_segments(coef, config.top_k, config.rank_by)
    keep = np.zeros(d, dtype=np.int8)
    keep[top] = 1
    names = list(getattr(classifier, "class_names", range(P.shape[1])))
    return LimeExplanation(
        coefficients=coef,
        intercept=intercept,
        target_class=str(names[target]),
        target_index=target,
        kernel_weights=weights,
        top_k_segments=top,
        mask_image=perturb_image(img, segments, keep, "black"),
        segments=segments,
        perturbations=Z,
        responses=y,
    )
