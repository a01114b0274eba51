# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ROI-Align kernel; bit-compatible in convention with _roialign_np."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _bilinear(const float[:, :, ::1] fmap, Py_ssize_t c,
                             double y, double x, Py_ssize_t H, Py_ssize_t W) noexcept nogil:
    cdef Py_ssize_t y_lo, y_hi, x_lo, x_hi
    cdef double wy_hi, wy_lo, wx_hi, wx_lo

    if y < -1.0 or y > <double>H or x < -1.0 or x > <double>W:
        return 0.0
    if y < 0.0:
        y = 0.0
    if x < 0.0:
        x = 0.0
    y_lo = <Py_ssize_t>y
    x_lo = <Py_ssize_t>x
    if y_lo >= H - 1:
        y_lo = H - 1
        y_hi = H - 1
        y = <double>y_lo
    else:
        y_hi = y_lo + 1
    if x_lo >= W - 1:
        x_lo = W - 1
        x_hi = W - 1
        x = <double>x_lo
    else:
        x_hi = x_lo + 1
    wy_hi = y - <double>y_lo
    wy_lo = 1.0 - wy_hi
    wx_hi = x - <double>x_lo
    wx_lo = 1.0 - wx_hi
    return (wy_lo * wx_lo * fmap[c, y_lo, x_lo]
            + wy_lo * wx_hi * fmap[c, y_lo, x_hi]
            + wy_hi * wx_lo * fmap[c, y_hi, x_lo]
            + wy_hi * wx_hi * fmap[c, y_hi, x_hi])


def pooled(const float[:, :, ::1] fmap, double y0, double x0, double y1, double x1,
           Py_ssize_t pool_h, Py_ssize_t pool_w, Py_ssize_t samples_y, Py_ssize_t samples_x):
    """Average samples_y*samples_x bilinear samples per bin; returns C×P×P float32."""
    cdef Py_ssize_t C = fmap.shape[0]
    cdef Py_ssize_t H = fmap.shape[1]
    cdef Py_ssize_t W = fmap.shape[2]
    cdef double bin_h = (y1 - y0) / <double>pool_h
    cdef double bin_w = (x1 - x0) / <double>pool_w

    out_arr = np.empty((C, pool_h, pool_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr

    cdef Py_ssize_t c, ph, pw, iy, ix
    cdef double acc, y, x
    cdef double inv = 1.0 / (<double>samples_y * <double>samples_x)

    with nogil:
        for c in range(C):
            for ph in range(pool_h):
                for pw in range(pool_w):
                    acc = 0.0
                    for iy in range(samples_y):
                        y = y0 + bin_h * (<double>ph + (<double>iy + 0.5) / <double>samples_y)
                        for ix in range(samples_x):
                            x = x0 + bin_w * (<double>pw + (<double>ix + 0.5) / <double>samples_x)
                            acc += _bilinear(fmap, c, y, x, H, W)
                    out[c, ph, pw] = <float>(acc * inv)
    return out_arr
