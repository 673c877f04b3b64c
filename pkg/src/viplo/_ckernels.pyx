# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_pykernels`` one-for-one."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, exp, log, INFINITY

cnp.import_array()


cdef inline void _fractions(double lo, double hi, Py_ssize_t* a, Py_ssize_t* c,
                            double* first, double* last) noexcept nogil:
    a[0] = <Py_ssize_t>floor(lo)
    c[0] = <Py_ssize_t>ceil(hi)
    if c[0] - a[0] <= 1:
        c[0] = a[0] + 1
        first[0] = hi - lo
        last[0] = hi - lo
    else:
        first[0] = 1.0 - (lo - a[0])
        last[0] = 1.0 - (c[0] - hi)


def overlap_masks(boxes, int patch_size, int grid_w, int grid_h):
    cdef double[:, ::1] b = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t M = b.shape[0]
    out_arr = np.zeros((M, grid_w * grid_h + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m, i, j, a, c, r0, d
    cdef double fx0, fx1, fy0, fy1, fx, fy, p = patch_size
    with nogil:
        for m in range(M):
            out[m, 0] = 1.0
            _fractions(b[m, 0] / p, b[m, 2] / p, &a, &c, &fx0, &fx1)
            _fractions(b[m, 1] / p, b[m, 3] / p, &r0, &d, &fy0, &fy1)
            for i in range(r0, d):
                if i == r0:
                    fy = fy0
                elif i == d - 1:
                    fy = fy1
                else:
                    fy = 1.0
                for j in range(a, c):
                    if j == a:
                        fx = fx0
                    elif j == c - 1:
                        fx = fx1
                    else:
                        fx = 1.0
                    out[m, 1 + i * grid_w + j] = fy * fx
    return out_arr


cdef inline double _clamp(double v, double hi) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > hi:
        return hi
    return v


def roi_align(fmap, box, int out_size, int sampling):
    cdef double[:, :, ::1] f = np.ascontiguousarray(fmap, dtype=np.float64)
    cdef Py_ssize_t H = f.shape[0], W = f.shape[1], C = f.shape[2]
    cdef double x1 = box[0], y1 = box[1], x2 = box[2], y2 = box[3]
    out_arr = np.zeros((out_size, out_size, C), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double bw = (x2 - x1) / out_size, bh = (y2 - y1) / out_size
    cdef double inv = 1.0 / (sampling * sampling)
    cdef Py_ssize_t ry, rx, sy, sx, ch, ix0, iy0, ix1, iy1
    cdef double x, y, fx, fy, w00, w01, w10, w11
    with nogil:
        for ry in range(out_size):
            for rx in range(out_size):
                for sy in range(sampling):
                    y = _clamp(y1 + (ry + (sy + 0.5) / sampling) * bh, H - 1)
                    iy0 = <Py_ssize_t>floor(y)
                    iy1 = iy0 + 1 if iy0 + 1 < H else H - 1
                    fy = y - iy0
                    for sx in range(sampling):
                        x = _clamp(x1 + (rx + (sx + 0.5) / sampling) * bw, W - 1)
                        ix0 = <Py_ssize_t>floor(x)
                        ix1 = ix0 + 1 if ix0 + 1 < W else W - 1
                        fx = x - ix0
                        w00 = (1 - fx) * (1 - fy)
                        w01 = fx * (1 - fy)
                        w10 = (1 - fx) * fy
                        w11 = fx * fy
                        for ch in range(C):
                            out[ry, rx, ch] += inv * (
                                w00 * f[iy0, ix0, ch] + w01 * f[iy0, ix1, ch]
                                + w10 * f[iy1, ix0, ch] + w11 * f[iy1, ix1, ch])
    return out_arr


def cls_attention(scores, masks, values):
    cdef double[:, ::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[:, ::1] mk = np.ascontiguousarray(masks, dtype=np.float64)
    cdef double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t Hh = s.shape[0], n = s.shape[1], M = mk.shape[0], D = v.shape[2]
    out_arr = np.zeros((M, Hh, D), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    w_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef Py_ssize_t m, h, k, dd
    cdef double zmax, z, total
    with nogil:
        for m in range(M):
            for h in range(Hh):
                zmax = -INFINITY
                for k in range(n):
                    if mk[m, k] > 0.0:
                        z = s[h, k] + log(mk[m, k])
                        if z > zmax:
                            zmax = z
                total = 0.0
                for k in range(n):
                    if mk[m, k] > 0.0:
                        w[k] = exp(s[h, k] + log(mk[m, k]) - zmax)
                        total += w[k]
                    else:
                        w[k] = 0.0
                for k in range(n):
                    if w[k] != 0.0:
                        z = w[k] / total
                        for dd in range(D):
                            out[m, h, dd] += z * v[h, k, dd]
    return out_arr
