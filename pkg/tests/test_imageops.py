import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from lesionkit.imageops import (AffineTransform, AugmentationPolicy, ImageFormatError,
                                InvalidTransformError, PolicyError, apply_affine, augment,
                                augment_batch, child_rng, flip_horizontal, image_center,
                                load_image, resize_bilinear, sample_augmentation, save_image)


def _png(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path)
    return path


def smooth_image(h=32, w=32):
    y, x = np.mgrid[0:h, 0:w]
    r = 0.5 + 0.3 * np.sin(x / 5.0) * np.cos(y / 7.0)
    g = 0.5 + 0.3 * np.cos((x + y) / 9.0)
    b = 0.4 + 0.2 * np.sin(y / 4.0)
    return np.stack([r, g, b], axis=-1)


# -- loading -------------------------------------------------------------------

def test_load_white_png(tmp_path):
    img = load_image(_png(tmp_path / "w.png", np.full((2, 2, 3), 255)), (2, 2))
    assert img.shape == (2, 2, 3)
    assert np.all(img == 1.0)


def test_load_black_png_downsized(tmp_path):
    img = load_image(_png(tmp_path / "b.png", np.zeros((4, 4, 3))), (2, 2))
    assert img.shape == (2, 2, 3) and np.all(img == 0.0)


def test_load_grayscale_becomes_three_channels(tmp_path):
    img = load_image(_png(tmp_path / "g.png", np.full((3, 5), 51)))
    assert img.shape == (3, 5, 3)
    assert np.allclose(img, 0.2)


def test_bilinear_upsample_by_hand():
    # two pixels [0, 1] widened to four: sample points at x = -0.25, 0.25, 0.75, 1.25,
    # clamped to the grid -> 0, 0.25, 0.75, 1
    img = np.array([[0.0, 1.0]])
    out = resize_bilinear(img, (1, 4))
    assert np.allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-12)


def test_load_rejects_non_image(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_image(p)


def test_load_rejects_other_format(tmp_path):
    p = tmp_path / "x.bmp"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(p, format="BMP")
    with pytest.raises(ImageFormatError):
        load_image(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "missing.png")


def test_save_load_round_trip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (5, 7, 3)) / 255.0
    save_image(tmp_path / "r.png", img)
    assert np.array_equal(load_image(tmp_path / "r.png"), img)


# -- affine --------------------------------------------------------------------

def test_identity_is_bitwise(backend):
    img = np.random.default_rng(0).random((9, 11, 3))
    assert np.array_equal(apply_affine(img, AffineTransform.identity()), img)


@pytest.mark.parametrize("size", [(8, 8), (9, 9)])
def test_rotation_90_is_a_permutation(backend, size):
    img = np.random.default_rng(2).random((*size, 3))
    out = apply_affine(img, AffineTransform.rotation(90.0))
    # every output pixel equals exactly one input pixel; the multiset is unchanged
    assert np.array_equal(np.sort(out.ravel()), np.sort(img.ravel()))
    assert any(np.array_equal(out, np.rot90(img, k, axes=(0, 1))) for k in (1, 3))


def test_rotation_90_direction(backend):
    # point-space rotation by +90 sends (x, y) -> (-y, x) about the center
    img = np.zeros((5, 5))
    img[2, 4] = 1.0  # x=4, y=2: one step right of center (2, 2)
    out = apply_affine(img, AffineTransform.rotation(90.0))
    assert out[4, 2] == 1.0 and out.sum() == 1.0


def test_shear_maps_point():
    p = AffineTransform.shear(0.2).apply_points([[1.0, 1.0]])
    assert np.allclose(p, [[1.2, 1.0]], atol=1e-15)


def test_singular_transform_rejected():
    with pytest.raises(InvalidTransformError):
        apply_affine(np.zeros((4, 4)), AffineTransform.scaling(1.0, 0.0))


def test_out_of_bounds_reads_fill(backend):
    img = np.full((6, 6), 0.3)
    out = apply_affine(img, AffineTransform.translate(100.0, 0.0), fill=0.7)
    assert np.all(out == 0.7)


@settings(max_examples=60, deadline=None)
@given(st.floats(-180, 180), st.floats(0, 0.2), st.floats(0.8, 1.2), st.floats(-5, 5),
       st.floats(-180, 180), st.floats(0.8, 1.2), st.floats(-5, 5),
       st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=5))
def test_composition_matches_matrix_product(a1, s1, k1, t1, a2, k2, t2, pts):
    T1 = AffineTransform.rotation(a1).then(AffineTransform.shear(s1)).then(
        AffineTransform.scaling(k1, k1)).then(AffineTransform.translate(t1, -t1))
    T2 = AffineTransform.rotation(a2).then(AffineTransform.scaling(k2, 1.0)).then(
        AffineTransform.translate(-t2, t2))
    c = (3.5, 4.5)
    step = T2.apply_points(T1.apply_points(pts, c), c)
    composed = AffineTransform(T2.matrix @ T1.matrix, T2.matrix @ T1.translation + T2.translation)
    assert np.allclose(step, composed.apply_points(pts, c), atol=1e-9)
    assert np.allclose(step, T1.then(T2).apply_points(pts, c), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 360), st.floats(0, 0.2), st.floats(0.9, 1.1), st.floats(0.9, 1.1),
       st.floats(-2, 2), st.floats(-2, 2))
def test_round_trip_interior_mae(theta, s, sx, sy, tx, ty):
    img = smooth_image(40, 40)
    T = AffineTransform(AffineTransform.scaling(sx, sy).matrix @ AffineTransform.shear(s).matrix
                        @ AffineTransform.rotation(theta).matrix, [tx, ty])
    assert 0.8 <= abs(T.det) <= 1.25
    back = apply_affine(apply_affine(img, T), T.inverse())
    # pixels whose forward image stays well inside the frame
    c = image_center(img)
    yy, xx = np.mgrid[0:40, 0:40]
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(float)
    fwd = T.apply_points(pts, c)
    inside = ((fwd[:, 0] > 2) & (fwd[:, 0] < 37) & (fwd[:, 1] > 2) & (fwd[:, 1] < 37)
              & (pts[:, 0] > 2) & (pts[:, 0] < 37) & (pts[:, 1] > 2) & (pts[:, 1] < 37))
    inside = inside.reshape(40, 40)
    assert inside.sum() > 100
    assert np.abs(back - img)[inside].mean() <= 0.02


# -- flips and policies ------------------------------------------------------

def test_flip_definition_and_involution():
    img = np.array([[0.3, 0.7]])
    assert np.array_equal(flip_horizontal(img), [[0.7, 0.3]])
    rnd = np.random.default_rng(3).random((4, 5, 3))
    assert np.array_equal(flip_horizontal(flip_horizontal(rnd)), rnd)
    sym = np.array([[0.1, 0.5, 0.1]])
    assert np.array_equal(flip_horizontal(sym), sym)


def test_shear_bound_enforced():
    with pytest.raises(PolicyError):
        AugmentationPolicy(shear_range=(0.0, 0.25))
    with pytest.raises(PolicyError):
        AugmentationPolicy(flip_horizontal_prob=1.5)
    with pytest.raises(PolicyError):
        AugmentationPolicy(rotation_range=(10.0, 5.0))


def test_degenerate_policy_gives_identity():
    flip, T = sample_augmentation(AugmentationPolicy.identity(), np.random.default_rng(0), (8, 8))
    assert flip is False
    assert np.array_equal(T.matrix, np.eye(2)) and np.array_equal(T.translation, [0.0, 0.0])


def test_same_seed_same_draw():
    p = AugmentationPolicy()
    a = sample_augmentation(p, np.random.default_rng(5), (32, 32))
    b = sample_augmentation(p, np.random.default_rng(5), (32, 32))
    assert a[0] == b[0]
    assert np.array_equal(a[1].matrix, b[1].matrix)
    assert np.array_equal(a[1].translation, b[1].translation)


def test_rotation_angle_mean():
    policy = AugmentationPolicy(flip_horizontal_prob=0.0, shear_range=(0.0, 0.0),
                                scale_range=(1.0, 1.0), translate_fraction=0.0)
    rng = np.random.default_rng(123)
    angles = []
    for _ in range(10_000):
        _, T = sample_augmentation(policy, rng)
        angles.append(math.degrees(math.atan2(T.matrix[1, 0], T.matrix[0, 0])) % 360.0)
    assert abs(np.mean(angles) - 180.0) <= 5.0


def test_augment_identity_and_black():
    img = np.random.default_rng(4).random((10, 10, 3))
    assert np.array_equal(augment(img, AugmentationPolicy.identity(), np.random.default_rng(0)), img)
    black = np.zeros((10, 10, 3))
    out = augment(black, AugmentationPolicy(), np.random.default_rng(9))
    assert np.all(out == 0.0)


def test_augment_deterministic_and_in_range(backend):
    img = smooth_image(24, 24)
    a = augment(img, AugmentationPolicy(), child_rng(7, 1))
    b = augment(img, AugmentationPolicy(), child_rng(7, 1))
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_augment_batch_independent_of_threads():
    images = [smooth_image(16, 16) * (0.5 + 0.1 * i) for i in range(6)]
    p = AugmentationPolicy(seed=3)
    one = augment_batch(images, p, epoch=2, threads=1)
    many = augment_batch(images, p, epoch=2, threads=4)
    assert all(np.array_equal(x, y) for x, y in zip(one, many))
