"""NumPy implementations of the numeric kernels.

These mirror ``_ckernels.pyx`` operation for operation (same loop order for
every floating-point accumulation), so both backends agree bit for bit on
the same inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SNAP_EPS = 1e-9


def warp_bilinear(img, matrix, offset, fill):
    """Inverse-map warp: output pixel (x, y) reads the source at ``matrix @ (x, y) + offset``.

    Reads outside the source grid return ``fill``. Source coordinates within
    ``SNAP_EPS`` of an integer are snapped so grid-to-grid maps stay exact.
    """
    img = np.ascontiguousarray(img)
    h, w, c = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = matrix[0][0] * xs + matrix[0][1] * ys + offset[0]
    sy = matrix[1][0] * xs + matrix[1][1] * ys + offset[1]
    rx = np.round(sx)
    ry = np.round(sy)
    sx = np.where(np.abs(sx - rx) < SNAP_EPS, rx, sx)
    sy = np.where(np.abs(sy - ry) < SNAP_EPS, ry, sy)

    x0f = np.floor(sx)
    y0f = np.floor(sy)
    fx = (sx - x0f)[..., None]
    fy = (sy - y0f)[..., None]
    # keep indices representable before the bounds test
    x0 = np.clip(x0f, -2, w + 1).astype(np.int64)
    y0 = np.clip(y0f, -2, h + 1).astype(np.int64)

    def read(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        out = np.full((h, w, c), fill, dtype=img.dtype)
        out[inside] = img[yy[inside], xx[inside]]
        return out

    v00 = read(y0, x0)
    v01 = read(y0, x0 + 1)
    v10 = read(y0 + 1, x0)
    v11 = read(y0 + 1, x0 + 1)
    top = (1.0 - fx) * v00 + fx * v01
    bot = (1.0 - fx) * v10 + fx * v11
    return ((1.0 - fy) * top + fy * bot).astype(img.dtype)


def im2col3x3(x):
    """(N, H, W, C) -> (N*H*W, C*9) patches of a zero-padded 3x3 window, ordered (c, ky, kx)."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, C, 3, 3)
    return np.ascontiguousarray(win).reshape(n * h * w, c * 9)


def col2im3x3(cols, n, h, w, c):
    """Adjoint of :func:`im2col3x3`."""
    cols = cols.reshape(n, h, w, c, 3, 3)
    out = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            out[:, ky:ky + h, kx:kx + w, :] += cols[..., ky, kx]
    return np.ascontiguousarray(out[:, 1:h + 1, 1:w + 1, :])


def maxpool2x2(x):
    """2x2/stride-2 max pool over (N, H, W, C); odd trailing rows/cols are dropped.

    Returns the pooled map and the winning window slot (0..3, row-major,
    first maximum wins).
    """
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(dout, idx, h, w):
    n, h2, w2, c = dout.shape
    grad = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(grad, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    grad = grad.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    out = np.zeros((n, h, w, c), dtype=dout.dtype)
    out[:, :2 * h2, :2 * w2, :] = grad.reshape(n, 2 * h2, 2 * w2, c)
    return out


def slic_assign(intensity, centers, step, compactness, radius):
    """One SLIC assignment sweep.

    Each center claims the pixels inside its square search window whose
    distance ``((I - Ic)/m)^2 + ((y-cy)^2 + (x-cx)^2)/S^2`` beats the best
    seen so far; ties keep the earlier center. Uncovered pixels get -1.
    """
    h, w = intensity.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    dist = np.full((h, w), np.inf)
    inv_m2 = 1.0 / (compactness * compactness)
    inv_s2 = 1.0 / (step * step)
    for k in range(centers.shape[0]):
        ci, cy, cx = centers[k]
        y0 = max(0, int(np.floor(cy - radius)))
        y1 = min(h, int(np.ceil(cy + radius)) + 1)
        x0 = max(0, int(np.floor(cx - radius)))
        x1 = min(w, int(np.ceil(cx + radius)) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy = np.arange(y0, y1, dtype=np.float64)[:, None]
        xx = np.arange(x0, x1, dtype=np.float64)[None, :]
        di = intensity[y0:y1, x0:x1] - ci
        d = di * di * inv_m2 + ((yy - cy) ** 2 + (xx - cx) ** 2) * inv_s2
        cur = dist[y0:y1, x0:x1]
        better = d < cur
        cur[better] = d[better]
        labels[y0:y1, x0:x1][better] = k
    return labels, dist
