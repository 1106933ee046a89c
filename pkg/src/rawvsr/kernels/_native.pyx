# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: patch extraction/scatter for convolution and
fractional bilinear gather/scatter for deformable sampling.

Must stay semantically identical to ``_python.py`` (the numpy fallback);
``tests/test_kernels.py`` enforces agreement.
"""

import numpy as np

from libc.math cimport floor

BACKEND_NAME = "native"


def im2col(double[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n, c * kh * kw, ho * wo), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * stride - pad + i
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * stride - pad + j
                            if 0 <= ix < w:
                                out[b, row, oy * wo + ox] = x[b, ch, iy, ix]
    return out_arr


def col2im(double[:, :, ::1] cols, int h, int w, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t c = cols.shape[1] // (kh * kw)
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * stride - pad + i
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * stride - pad + j
                            if 0 <= ix < w:
                                out[b, ch, iy, ix] += cols[b, row, oy * wo + ox]
    return out_arr


def bilinear_gather(double[:, :, :, ::1] feat, double[:, ::1] ys, double[:, ::1] xs):
    cdef Py_ssize_t n = feat.shape[0], c = feat.shape[1], h = feat.shape[2], w = feat.shape[3]
    cdef Py_ssize_t m = ys.shape[1]
    out_arr = np.zeros((n, c, m), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, k, y0, x0, y1, x1
    cdef double y, x, fy, fx, w00, w01, w10, w11, acc
    cdef bint in00, in01, in10, in11
    for b in range(n):
        for k in range(m):
            y = ys[b, k]
            x = xs[b, k]
            y0 = <Py_ssize_t>floor(y)
            x0 = <Py_ssize_t>floor(x)
            fy = y - y0
            fx = x - x0
            y1 = y0 + 1
            x1 = x0 + 1
            in00 = 0 <= y0 < h and 0 <= x0 < w
            in01 = 0 <= y0 < h and 0 <= x1 < w
            in10 = 0 <= y1 < h and 0 <= x0 < w
            in11 = 0 <= y1 < h and 0 <= x1 < w
            if not (in00 or in01 or in10 or in11):
                continue
            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx
            for ch in range(c):
                acc = 0.0
                if in00:
                    acc += feat[b, ch, y0, x0] * w00
                if in01:
                    acc += feat[b, ch, y0, x1] * w01
                if in10:
                    acc += feat[b, ch, y1, x0] * w10
                if in11:
                    acc += feat[b, ch, y1, x1] * w11
                out[b, ch, k] = acc
    return out_arr


def bilinear_scatter(double[:, :, :, ::1] feat, double[:, ::1] ys, double[:, ::1] xs,
                     double[:, :, ::1] gout):
    cdef Py_ssize_t n = feat.shape[0], c = feat.shape[1], h = feat.shape[2], w = feat.shape[3]
    cdef Py_ssize_t m = ys.shape[1]
    gfeat_arr = np.zeros((n, c, h, w), dtype=np.float64)
    gys_arr = np.zeros((n, m), dtype=np.float64)
    gxs_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, :, :, ::1] gfeat = gfeat_arr
    cdef double[:, ::1] gys = gys_arr
    cdef double[:, ::1] gxs = gxs_arr
    cdef Py_ssize_t b, ch, k, y0, x0, y1, x1
    cdef double y, x, fy, fx, w00, w01, w10, w11
    cdef double v00, v01, v10, v11, g, gy_acc, gx_acc
    cdef bint in00, in01, in10, in11
    for b in range(n):
        for k in range(m):
            y = ys[b, k]
            x = xs[b, k]
            y0 = <Py_ssize_t>floor(y)
            x0 = <Py_ssize_t>floor(x)
            fy = y - y0
            fx = x - x0
            y1 = y0 + 1
            x1 = x0 + 1
            in00 = 0 <= y0 < h and 0 <= x0 < w
            in01 = 0 <= y0 < h and 0 <= x1 < w
            in10 = 0 <= y1 < h and 0 <= x0 < w
            in11 = 0 <= y1 < h and 0 <= x1 < w
            if not (in00 or in01 or in10 or in11):
                continue
            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx
            gy_acc = 0.0
            gx_acc = 0.0
            for ch in range(c):
                g = gout[b, ch, k]
                v00 = feat[b, ch, y0, x0] if in00 else 0.0
                v01 = feat[b, ch, y0, x1] if in01 else 0.0
                v10 = feat[b, ch, y1, x0] if in10 else 0.0
                v11 = feat[b, ch, y1, x1] if in11 else 0.0
                gy_acc += g * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01))
                gx_acc += g * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10))
                if in00:
                    gfeat[b, ch, y0, x0] += g * w00
                if in01:
                    gfeat[b, ch, y0, x1] += g * w01
                if in10:
                    gfeat[b, ch, y1, x0] += g * w10
                if in11:
                    gfeat[b, ch, y1, x1] += g * w11
            gys[b, k] = gy_acc
            gxs[b, k] = gx_acc
    return gfeat_arr, gys_arr, gxs_arr
