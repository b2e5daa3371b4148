import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionkit.classifier import ReferenceCnn
from lesionkit.explain import (CamHeatmap, LimeConfig, RankError, SegmentationConfig,
                               SegmentationError, SuperpixelMap, UnsupportedModelError,
                               activation_map, bounding_box, cam, cam_raw, colormap,
                               cosine_distance_to_original, fit_weighted_ridge, grid_segments,
                               kernel_weight, lime_explain, overlay, perturb_image, rank_segments,
                               roi_panel, sample_perturbations, slic_kmeans, superpixels,
                               threshold_segment)
from lesionkit.explain.cam import normalize
from lesionkit.imageops import resize_bilinear


def textured(h=48, w=48, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w]
    base = 0.5 + 0.25 * np.sin(x / 6.0) * np.cos(y / 5.0)
    return np.clip(np.repeat(base[:, :, None], 3, axis=2) + 0.02 * rng.standard_normal((h, w, 3)), 0, 1)


# -- superpixels -------------------------------------------------------------------

def test_single_segment():
    sp = superpixels(textured(), 1)
    assert sp.n_segments == 1 and np.all(sp.labels == 0)


def test_constant_image_four_cells():
    sp = superpixels(np.full((32, 32, 3), 0.4), 4)
    assert sp.n_segments == 4
    assert sorted(sp.sizes.tolist()) == [256, 256, 256, 256]
    # each cell is a quadrant
    assert len({sp.labels[0, 0], sp.labels[0, 31], sp.labels[31, 0], sp.labels[31, 31]}) == 4


def test_two_tone_boundary_and_nearest_center(backend):
    img = np.zeros((32, 32))
    img[:, 16:] = 1.0
    labels, centers, step = slic_kmeans(img, 2)
    # brute force: every pixel sits with the closest center in (intensity, y, x) space
    yy, xx = np.mgrid[0:32, 0:32]
    d = (((img[..., None] - centers[:, 0]) / 0.1) ** 2
         + ((yy[..., None] - centers[:, 1]) ** 2 + (xx[..., None] - centers[:, 2]) ** 2) / step ** 2)
    assert np.array_equal(labels, np.argmin(d, axis=2))
    sp = superpixels(img, 2)
    assert sp.n_segments == 2
    assert len(set(sp.labels[:, :16].ravel())) == 1 and len(set(sp.labels[:, 16:].ravel())) == 1
    assert sp.labels[0, 0] != sp.labels[0, 31]


def test_default_target_count_and_connectivity(backend):
    from scipy import ndimage
    sp = superpixels(textured(64, 64), 40)
    assert 32 <= sp.n_segments <= 48
    for s in range(sp.n_segments):
        assert ndimage.label(sp.labels == s)[1] == 1
    again = superpixels(textured(64, 64), 40)
    assert np.array_equal(sp.labels, again.labels)


def test_superpixel_errors():
    with pytest.raises(SegmentationError):
        superpixels(np.zeros((4, 4)), 0)
    with pytest.raises(SegmentationError):
        superpixels(np.zeros((4, 4)), 17)
    with pytest.raises(SegmentationError):
        superpixels(np.zeros((4, 4)), 2, mode="watershed")


def test_grid_mode():
    sp = superpixels(np.zeros((6, 8)), 4, mode="grid")
    assert sp.n_segments == 4 and sorted(sp.sizes.tolist()) == [12] * 4


# -- perturbations and kernel ------------------------------------------------------

def test_sample_perturbations():
    z = sample_perturbations(7, 10_000, np.random.default_rng(0))
    assert z.shape == (10_000, 7) and np.all(z[0] == 1)
    assert set(np.unique(z)) <= {0, 1}
    assert abs(z[1:].mean() - 0.5) <= 0.02
    assert np.array_equal(z, sample_perturbations(7, 10_000, np.random.default_rng(0)))


def test_perturb_image():
    img = textured(12, 12)
    seg = grid_segments((12, 12), 4)
    assert np.array_equal(perturb_image(img, seg, np.ones(4)), img)
    assert np.all(perturb_image(img, seg, np.zeros(4), "black") == 0)
    z = np.array([1, 0, 1, 1])
    out = perturb_image(img, seg, z, "black")
    changed = np.any(out != img, axis=2)
    assert changed.sum() == seg.sizes[1]
    assert np.all(seg.labels[changed] == 1)
    with pytest.raises(ValueError):
        perturb_image(img, seg, np.ones(3))


def test_kernel_weight_values():
    assert kernel_weight(np.ones(5)) == 1.0
    assert cosine_distance_to_original([1, 0, 0, 0])[0] == 0.5
    assert kernel_weight(np.array([1, 0, 0, 0])) == pytest.approx(math.exp(-6.25), rel=1e-15)
    assert kernel_weight(np.zeros(6)) == pytest.approx(math.exp(-25))
    z = np.array([[1, 1, 0], [0, 1, 0]])
    # independent cosine with the all-ones vector
    cos = (z @ np.ones(3)) / (np.linalg.norm(z, axis=1) * math.sqrt(3))
    assert np.allclose(kernel_weight(z), np.exp(-((1 - cos) ** 2) / 0.04))


# -- weighted ridge ---------------------------------------------------------------

def normal_equations(Z, y, w):
    """Plain weighted least squares with an intercept, built term by term."""
    n, d = Z.shape
    A = np.zeros((d + 1, d + 1))
    b = np.zeros(d + 1)
    for zi, yi, wi in zip(Z, y, w):
        x = np.concatenate([[1.0], zi])
        A += wi * np.outer(x, x)
        b += wi * yi * x
    beta = np.linalg.solve(A, b)
    return beta[1:], beta[0]


def test_ridge_constant_response():
    Z = sample_perturbations(5, 40, np.random.default_rng(1)).astype(float)
    coef, b0 = fit_weighted_ridge(Z, np.full(40, 0.3), np.ones(40), 1e-3)
    assert np.allclose(coef, 0, atol=1e-12) and b0 == pytest.approx(0.3)


def test_ridge_line_recovery():
    Z = sample_perturbations(4, 64, np.random.default_rng(2)).astype(float)
    y = 2 * Z[:, 0] - 1
    coef, b0 = fit_weighted_ridge(Z, y, np.ones(64), 1e-9)
    assert coef[0] == pytest.approx(2, abs=1e-4)
    assert np.allclose(coef[1:], 0, atol=1e-4) and b0 == pytest.approx(-1, abs=1e-4)


def test_ridge_two_point_interpolation():
    Z = np.array([[0.0], [1.0], [1.0], [0.0]])
    y = np.array([0.2, 0.9, 5.0, -3.0])
    w = np.array([1.0, 1.0, 0.0, 0.0])
    coef, b0 = fit_weighted_ridge(Z, y, w, 1e-12)
    # line through (0, 0.2) and (1, 0.9)
    assert b0 == pytest.approx(0.2, abs=1e-9) and coef[0] == pytest.approx(0.7, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 10_000))
def test_ridge_zero_lambda_matches_normal_equations(d, seed):
    rng = np.random.default_rng(seed)
    Z = sample_perturbations(d, 150, rng).astype(float)
    y = rng.random(150)
    w = kernel_weight(Z, 0.5)
    if np.linalg.matrix_rank(np.hstack([np.ones((150, 1)), Z])) < d + 1:
        return
    coef, b0 = fit_weighted_ridge(Z, y, w, 0.0)
    ref, ref0 = normal_equations(Z, y, w)
    assert np.allclose(coef, ref, atol=1e-6) and abs(b0 - ref0) < 1e-6
    sw = np.sqrt(w)
    sol = np.linalg.lstsq(np.hstack([np.ones((150, 1)), Z]) * sw[:, None], y * sw, rcond=None)[0]
    assert np.allclose(coef, sol[1:], atol=1e-6)


def test_ridge_rank_error():
    Z = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(RankError):
        fit_weighted_ridge(Z, np.array([1.0, 0.0, 1.0]), np.ones(3), 0.0)
    coef, _ = fit_weighted_ridge(Z, np.array([1.0, 0.0, 1.0]), np.ones(3), 1e-3)
    assert np.all(np.isfinite(coef))


def test_rank_segments():
    c = np.array([0.1, -0.5, 0.4, 0.1])
    assert rank_segments(c, 2) == [2, 0]
    assert rank_segments(c, 2, "abs") == [1, 2]
    assert rank_segments(c, 9) == [2, 0, 3, 1]


# -- LIME end to end ----------------------------------------------------------------

class SegmentOracle:
    """Black box whose class-1 probability is affine in segment visibility.

    A segment counts as visible when its mean intensity is above 0.1
    (perturbed segments are filled with black).
    """

    class_names = ("neg", "pos")

    def __init__(self, segments: SuperpixelMap, coef, intercept):
        self.segments, self.coef, self.intercept = segments, np.asarray(coef), intercept
        self.calls = 0

    def visible(self, img):
        lab = self.segments.labels.ravel()
        mean = np.bincount(lab, img.mean(axis=2).ravel()) / np.bincount(lab)
        return (mean > 0.1).astype(float)

    def predict(self, images):
        self.calls += len(images)
        p = np.array([self.intercept + self.visible(im) @ self.coef for im in images])
        return np.stack([1 - p, p], axis=1)


def stripes(h, w, d):
    return SuperpixelMap(np.broadcast_to((np.arange(w) * d) // w, (h, w)).copy(), d)


def oracle_image(h=40, w=40):
    return np.full((h, w, 3), 0.6)


def test_lime_constant_classifier():
    class Constant:
        def predict(self, images):
            return np.tile([0.7, 0.3], (len(images), 1))

    ex = lime_explain(Constant(), textured(24, 24), LimeConfig(target_segments=6))
    assert np.allclose(ex.coefficients, 0, atol=1e-9)
    assert ex.target_index == 0 and len(ex.top_k_segments) == 4


def test_lime_single_segment_oracle():
    seg = grid_segments((40, 40), 8)
    d = seg.n_segments
    coef = np.zeros(d)
    coef[3] = 0.6
    oracle = SegmentOracle(seg, coef, 0.2)
    cfg = LimeConfig(off_color="black", top_k=1)
    ex = lime_explain(oracle, oracle_image(), cfg, segments=seg)
    assert ex.target_index == 1 and ex.top_k_segments == [3]
    # independent exact solve of the same weighted system (ridge term included)
    Z = ex.perturbations.astype(float)
    X = np.hstack([np.ones((len(Z), 1)), Z])
    A = X.T @ np.diag(ex.kernel_weights) @ X + np.diag([0.0] + [cfg.ridge_lambda] * d)
    sol = np.linalg.solve(A, X.T @ (ex.kernel_weights * (0.2 + 0.6 * Z[:, 3])))
    assert np.allclose(ex.coefficients, sol[1:], atol=1e-10)
    assert int(np.argmax(ex.coefficients)) == 3


def test_lime_affine_oracle_recovery():
    hits = 0
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        d = int(rng.integers(5, 11))
        seg = stripes(40, 40, d)
        coef = rng.uniform(-1, 1, d)
        coef *= 0.4 / np.abs(coef).sum()
        intercept = 0.5 - coef[coef < 0].sum() + 0.05  # p(all on) > 0.5 and p in [0, 1]
        ex = lime_explain(SegmentOracle(seg, coef, intercept),
                          oracle_image(), LimeConfig(off_color="black", seed=trial), segments=seg)
        truth = set(np.argsort(-coef, kind="stable")[:4].tolist())
        hits += set(ex.top_k_segments) == truth
    assert hits >= 19


def test_lime_deterministic_and_mask():
    seg = grid_segments((40, 40), 6)
    oracle = SegmentOracle(seg, [0.3, 0.0, 0.1, 0.0, 0.05, 0.0], 0.4)
    a = lime_explain(oracle, oracle_image(), LimeConfig(seed=5, top_k=2), segments=seg)
    b = lime_explain(oracle, oracle_image(), LimeConfig(seed=5, top_k=2), segments=seg)
    assert np.array_equal(a.coefficients, b.coefficients)
    kept = np.isin(seg.labels, a.top_k_segments)
    assert np.all(a.mask_image[~kept] == 0) and np.array_equal(a.mask_image[kept], oracle_image()[kept])
    assert a.to_dict()["top_k_segments"] == a.top_k_segments


def test_lime_with_real_model():
    m = ReferenceCnn.create(("a", "b"), (16, 16, 3), (3,), seed=0)
    ex = lime_explain(m, textured(16, 16), LimeConfig(target_segments=8, num_samples=30))
    assert ex.coefficients.shape == (ex.segments.n_segments,)


# -- CAM ------------------------------------------------------------------------------

def test_cam_hand_2x2():
    maps = np.zeros((2, 2, 2))
    maps[..., 0] = [[1.0, 2.0], [3.0, 4.0]]
    maps[..., 1] = [[0.0, 1.0], [0.0, 2.0]]
    w = np.array([[0.5, 0.0], [-1.0, 2.0]])
    raw = activation_map(maps, w, 0)
    assert raw.tolist() == [[0.5, 0.0], [1.5, 0.0]]
    assert normalize(raw).tolist() == [[1 / 3, 0.0], [1.0, 0.0]]
    assert activation_map(maps, w, 1).tolist() == [[0.0, 2.0], [0.0, 4.0]]


def test_cam_linearity_and_zero(backend):
    m = ReferenceCnn.create(("a", "b"), (16, 16, 3), (4, 5), seed=1, dtype="float64")
    img = textured(16, 16)
    rng = np.random.default_rng(0)
    w1, w2 = rng.standard_normal((2, 5, 2))
    a, b = 0.7, -1.3
    raws = []
    for w in (w1, w2, a * w1 + b * w2):
        m.params["head.weight"] = w
        raws.append(cam_raw(m, img, 1))
    assert np.abs(raws[2] - (a * raws[0] + b * raws[1])).max() <= 1e-9
    m.params["head.weight"] = np.zeros((5, 2))
    assert np.all(cam_raw(m, img, 0) == 0)
    assert np.all(cam(m, img, 0).values == 0)


def test_cam_single_map_identity():
    m = ReferenceCnn.create(("a", "b"), (8, 8, 3), (1,), seed=2, dtype="float64")
    m.params["head.weight"] = np.array([[1.0, 0.0]])
    img = textured(8, 8)
    from lesionkit.classifier import feature_maps
    act = feature_maps(m, img)[0, :, :, 0]
    heat = cam(m, img, 0)
    assert np.allclose(heat.values, normalize(resize_bilinear(act, (8, 8))))
    assert heat.values.shape == (8, 8) and heat.class_name == "a"


def test_cam_unsupported_model():
    class Opaque:
        def predict(self, images):
            return np.ones((len(images), 2)) / 2

    with pytest.raises(UnsupportedModelError):
        cam(Opaque(), np.zeros((8, 8, 3)))


def test_overlay_endpoints():
    img = textured(6, 6)
    values = np.linspace(0, 1, 36).reshape(6, 6)
    assert np.array_equal(overlay(img, values, 0.0), img)
    assert np.array_equal(overlay(img, values, 1.0), colormap(values))
    assert colormap(np.array([0.0])).tolist() == [[0.0, 0.0, 1.0]]
    assert colormap(np.array([1.0])).tolist() == [[1.0, 0.0, 0.0]]
    with pytest.raises(ValueError):
        overlay(img, np.zeros((5, 6)))
    heat = CamHeatmap(values, "a", 0, values)
    assert np.array_equal(overlay(img, heat, 0.4), overlay(img, values, 0.4))


# -- threshold segmentation -----------------------------------------------------------

def test_segment_full_and_empty():
    full = threshold_segment(np.full((5, 7, 3), 0.8), SegmentationConfig(0.5, 1.0))
    assert full.mask.all() and full.roi == (0, 0, 5, 7)
    empty = threshold_segment(np.full((5, 7, 3), 0.2), SegmentationConfig(0.5, 1.0))
    assert not empty.mask.any() and empty.roi is None and empty.segmented.size == 0


def test_segment_block():
    img = np.zeros((4, 4, 3))
    img[1:3, 1:3] = 0.9
    res = threshold_segment(img, SegmentationConfig(0.5, 1.0))
    assert res.roi == (1, 1, 3, 3)
    assert np.array_equal(res.segmented, img[1:3, 1:3])
    panel = roi_panel(img, res.roi)
    assert panel[1, 1].tolist() == [1.0, 0.0, 0.0]


def test_segment_channel_and_errors():
    img = np.zeros((3, 3, 3))
    img[0, 0, 2] = 1.0
    assert threshold_segment(img, SegmentationConfig(0.5, 1.0, channel=2)).roi == (0, 0, 1, 1)
    assert threshold_segment(img, SegmentationConfig(0.5, 1.0)).roi is None
    with pytest.raises(ValueError):
        SegmentationConfig(0.6, 0.5)
    with pytest.raises(ValueError):
        threshold_segment(img, SegmentationConfig(0.5, 1.0, channel=3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.6), st.floats(0.0, 0.4))
def test_segment_idempotent(seed, lo, width):
    img = np.random.default_rng(seed).random((9, 9, 3))
    cfg = SegmentationConfig(lo, min(1.0, lo + width))
    first = threshold_segment(img, cfg)
    if first.roi is None:
        return
    second = threshold_segment(first.segmented, cfg)
    t, l, b, r = first.roi
    assert np.array_equal(second.mask, first.mask[t:b, l:r])
    assert bounding_box(second.mask) == (0, 0, b - t, r - l)
