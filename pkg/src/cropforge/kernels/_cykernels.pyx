# cython: language_level=3
"""Compiled kernel backend.

Bit-compatible mirror of ``_pykernels``: per output element the taps are
accumulated in ascending order as ``acc += weight * value`` in double
precision and stored as float32. The extension is built with
``-ffp-contract=off`` so the compiler cannot fuse that multiply-add into an
FMA, which would change rounding versus the NumPy reference.
"""

import numpy as np

from libc.math cimport floor


def resample_h(const float[:, ::1] plane, const int[:, ::1] idx, const double[:, ::1] wts):
    """Resample along axis 1 (width). plane float32 (H, W_in) -> (H, W_out)."""
    cdef Py_ssize_t h = plane.shape[0]
    cdef Py_ssize_t n_out = idx.shape[0]
    cdef Py_ssize_t n_taps = idx.shape[1]
    out_arr = np.empty((h, n_out), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t r, o, m
    cdef double acc
    for r in range(h):
        for o in range(n_out):
            acc = 0.0
            for m in range(n_taps):
                acc = acc + wts[o, m] * <double> plane[r, idx[o, m]]
            out[r, o] = <float> acc
    return out_arr


def resample_v(const float[:, ::1] plane, const int[:, ::1] idx, const double[:, ::1] wts):
    """Resample along axis 0 (height). plane float32 (H_in, W) -> (H_out, W)."""
    cdef Py_ssize_t w = plane.shape[1]
    cdef Py_ssize_t n_out = idx.shape[0]
    cdef Py_ssize_t n_taps = idx.shape[1]
    out_arr = np.empty((n_out, w), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t c, o, m
    cdef double acc
    for o in range(n_out):
        for c in range(w):
            acc = 0.0
            for m in range(n_taps):
                acc = acc + wts[o, m] * <double> plane[idx[o, m], c]
            out[o, c] = <float> acc
    return out_arr


def warp_bilinear(const float[:, ::1] plane, const double[:, ::1] map_x, const double[:, ::1] map_y):
    """Sample `plane` at continuous pixel-center coords (map_x, map_y)."""
    cdef Py_ssize_t h_in = plane.shape[0]
    cdef Py_ssize_t w_in = plane.shape[1]
    cdef Py_ssize_t h_out = map_x.shape[0]
    cdef Py_ssize_t w_out = map_x.shape[1]
    out_arr = np.empty((h_out, w_out), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, x0, y0, x1, y1
    cdef double tx, ty, x0f, y0f, fx, fy, v00, v01, v10, v11, top, bot
    for i in range(h_out):
        for j in range(w_out):
            tx = map_x[i, j] - 0.5
            ty = map_y[i, j] - 0.5
            x0f = floor(tx)
            y0f = floor(ty)
            # fractions use the unclamped floor, exactly as the reference does
            fx = tx - x0f
            fy = ty - y0f
            x0 = <Py_ssize_t> x0f
            y0 = <Py_ssize_t> y0f
            if x0 < 0:
                x0 = 0
            elif x0 > w_in - 1:
                x0 = w_in - 1
            if y0 < 0:
                y0 = 0
            elif y0 > h_in - 1:
                y0 = h_in - 1
            x1 = x0 + 1
            if x1 > w_in - 1:
                x1 = w_in - 1
            y1 = y0 + 1
            if y1 > h_in - 1:
                y1 = h_in - 1
            v00 = <double> plane[y0, x0]
            v01 = <double> plane[y0, x1]
            v10 = <double> plane[y1, x0]
            v11 = <double> plane[y1, x1]
            top = (1.0 - fx) * v00 + fx * v01
            bot = (1.0 - fx) * v10 + fx * v11
            out[i, j] = <float> ((1.0 - fy) * top + fy * bot)
    return out_arr
