# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs, round as c_round, INFINITY

ctypedef fused floating:
    float
    double

cdef double SNAP_EPS = 1e-9

cnp.import_array()


def warp_bilinear(const floating[:, :, ::1] img, matrix, offset, double fill):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef double m00 = matrix[0][0], m01 = matrix[0][1]
    cdef double m10 = matrix[1][0], m11 = matrix[1][1]
    cdef double o0 = offset[0], o1 = offset[1]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((h, w, c), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, x0, y0
    cdef double sx, sy, rx, ry, fx, fy, v00, v01, v10, v11, top, bot
    cdef bint in00, in01, in10, in11
    with nogil:
        for i in range(h):
            for j in range(w):
                sx = m00 * j + m01 * i + o0
                sy = m10 * j + m11 * i + o1
                rx = c_round(sx)
                ry = c_round(sy)
                if fabs(sx - rx) < SNAP_EPS:
                    sx = rx
                if fabs(sy - ry) < SNAP_EPS:
                    sy = ry
                fx = floor(sx)
                fy = floor(sy)
                if fx < -2:
                    fx = -2
                elif fx > w + 1:
                    fx = w + 1
                if fy < -2:
                    fy = -2
                elif fy > h + 1:
                    fy = h + 1
                x0 = <Py_ssize_t>fx
                y0 = <Py_ssize_t>fy
                fx = sx - floor(sx)
                fy = sy - floor(sy)
                in00 = 0 <= x0 < w and 0 <= y0 < h
                in01 = 0 <= x0 + 1 < w and 0 <= y0 < h
                in10 = 0 <= x0 < w and 0 <= y0 + 1 < h
                in11 = 0 <= x0 + 1 < w and 0 <= y0 + 1 < h
                for k in range(c):
                    v00 = img[y0, x0, k] if in00 else <floating>fill
                    v01 = img[y0, x0 + 1, k] if in01 else <floating>fill
                    v10 = img[y0 + 1, x0, k] if in10 else <floating>fill
                    v11 = img[y0 + 1, x0 + 1, k] if in11 else <floating>fill
                    top = (1.0 - fx) * v00 + fx * v01
                    bot = (1.0 - fx) * v10 + fx * v11
                    out[i, j, k] = <floating>((1.0 - fy) * top + fy * bot)
    return out_arr


def im2col3x3(const floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    cols_arr = np.zeros((n * h * w, c * 9), dtype=dtype)
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t b, i, j, ch, ky, kx, yy, xx, row
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    row = (b * h + i) * w + j
                    for ky in range(3):
                        yy = i + ky - 1
                        if yy < 0 or yy >= h:
                            continue
                        for kx in range(3):
                            xx = j + kx - 1
                            if xx < 0 or xx >= w:
                                continue
                            for ch in range(c):
                                cols[row, ch * 9 + ky * 3 + kx] = x[b, yy, xx, ch]
    return cols_arr


def col2im3x3(const floating[:, ::1] cols, Py_ssize_t n, Py_ssize_t h, Py_ssize_t w, Py_ssize_t c):
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, h, w, c), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ch, ky, kx, yy, xx, row
    # accumulate in (ky, kx) order per output element to match the NumPy path
    with nogil:
        for b in range(n):
            for ky in range(3):
                for kx in range(3):
                    for i in range(h):
                        yy = i + ky - 1
                        if yy < 0 or yy >= h:
                            continue
                        for j in range(w):
                            xx = j + kx - 1
                            if xx < 0 or xx >= w:
                                continue
                            row = (b * h + i) * w + j
                            for ch in range(c):
                                out[b, yy, xx, ch] += cols[row, ch * 9 + ky * 3 + kx]
    return out_arr


def maxpool2x2(const floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h2 = x.shape[1] // 2, w2 = x.shape[2] // 2, c = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, h2, w2, c), dtype=dtype)
    idx_arr = np.empty((n, h2, w2, c), dtype=np.int8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, i, j, ch, s
    cdef floating best, v
    cdef cnp.int8_t arg
    with nogil:
        for b in range(n):
            for i in range(h2):
                for j in range(w2):
                    for ch in range(c):
                        best = x[b, 2 * i, 2 * j, ch]
                        arg = 0
                        v = x[b, 2 * i, 2 * j + 1, ch]
                        if v > best:
                            best = v
                            arg = 1
                        v = x[b, 2 * i + 1, 2 * j, ch]
                        if v > best:
                            best = v
                            arg = 2
                        v = x[b, 2 * i + 1, 2 * j + 1, ch]
                        if v > best:
                            best = v
                            arg = 3
                        out[b, i, j, ch] = best
                        idx[b, i, j, ch] = arg
    return out_arr, idx_arr


def maxpool2x2_backward(const floating[:, :, :, ::1] dout, const cnp.int8_t[:, :, :, ::1] idx,
                        Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = dout.shape[0], h2 = dout.shape[1], w2 = dout.shape[2], c = dout.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, h, w, c), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ch
    cdef int s
    with nogil:
        for b in range(n):
            for i in range(h2):
                for j in range(w2):
                    for ch in range(c):
                        s = idx[b, i, j, ch]
                        out[b, 2 * i + s // 2, 2 * j + s % 2, ch] = dout[b, i, j, ch]
    return out_arr


def slic_assign(const double[:, ::1] intensity, const double[:, ::1] centers, double step,
                double compactness, double radius):
    cdef Py_ssize_t h = intensity.shape[0], w = intensity.shape[1], nk = centers.shape[0]
    labels_arr = np.full((h, w), -1, dtype=np.int64)
    dist_arr = np.full((h, w), np.inf)
    cdef cnp.int64_t[:, ::1] labels = labels_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double inv_m2 = 1.0 / (compactness * compactness)
    cdef double inv_s2 = 1.0 / (step * step)
    cdef Py_ssize_t k, y, x, y0, y1, x0, x1
    cdef double ci, cy, cx, di, dy, dx, d
    with nogil:
        for k in range(nk):
            ci = centers[k, 0]
            cy = centers[k, 1]
            cx = centers[k, 2]
            y0 = <Py_ssize_t>floor(cy - radius)
            if y0 < 0:
                y0 = 0
            y1 = <Py_ssize_t>ceil(cy + radius) + 1
            if y1 > h:
                y1 = h
            x0 = <Py_ssize_t>floor(cx - radius)
            if x0 < 0:
                x0 = 0
            x1 = <Py_ssize_t>ceil(cx + radius) + 1
            if x1 > w:
                x1 = w
            for y in range(y0, y1):
                dy = y - cy
                for x in range(x0, x1):
                    dx = x - cx
                    di = intensity[y, x] - ci
                    d = di * di * inv_m2 + (dy * dy + dx * dx) * inv_s2
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = k
    return labels_arr, dist_arr
