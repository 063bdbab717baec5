# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see _fallback for the reference)."""
from libc.math cimport log

import numpy as np


def ring_log_sum(const double[::1] s_tgt, const double[::1] t_tgt,
                 const double[:, ::1] s_src, const double[:, ::1] t_src,
                 const double[:, ::1] w_src, double[:, ::1] out):
    cdef Py_ssize_t n = s_tgt.shape[0], m = s_src.shape[0], q = s_src.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, a, b, si, ti
    with nogil:
        for i in range(n):
            si = s_tgt[i]
            ti = t_tgt[i]
            for j in range(m):
                acc = 0.0
                for k in range(q):
                    a = si + s_src[j, k]
                    b = ti - t_src[j, k]
                    acc = acc + w_src[j, k] * log(a * a + b * b)
                out[i, j] = 0.25 * acc
    return out


def ring_log_pairs(const double[::1] s_tgt, const double[::1] t_tgt,
                   const double[:, ::1] s_src, const double[:, ::1] t_src,
                   const double[:, ::1] w_src, double[::1] out):
    cdef Py_ssize_t n = s_tgt.shape[0], q = s_src.shape[1]
    cdef Py_ssize_t p, k
    cdef double acc, a, b
    with nogil:
        for p in range(n):
            acc = 0.0
            for k in range(q):
                a = s_tgt[p] + s_src[p, k]
                b = t_tgt[p] - t_src[p, k]
                acc = acc + w_src[p, k] * log(a * a + b * b)
            out[p] = 0.25 * acc
    return out


cdef inline double _lw(double c0, double c1, double c2, double x, double y, double t) noexcept nogil:
    cdef double s = x * x + y * y
    return c0 * s + c1 * s * s + c2 * t * t


def metropolis_sweeps(double[:, ::1] X, const double[:, :, ::1] steps, const double[:, ::1] logu,
                      double pair_coef, coeffs, double radius4,
                      Py_ssize_t first_sweep, Py_ssize_t burn_in, Py_ssize_t thin,
                      double[:, :, ::1] out, log_weight=None):
    if log_weight is not None:
        raise ValueError("compiled sampler supports polynomial log weights only")
    cdef double c0 = coeffs[0], c1 = coeffs[1], c2 = coeffs[2]
    cdef Py_ssize_t n_sweeps = steps.shape[0], n = steps.shape[1]
    cdef Py_ssize_t k, i, j, idx
    cdef long accepted = 0, rec = 0
    cdef double xi, yi, ti, dx, dy, dt, nx, ny, nt, s, new_lw, dlog
    cdef double xj, yj, tj, ax, ay, at, ar, bx, by, bt, br
    cdef double[::1] lw = np.empty(n)
    for i in range(n):
        lw[i] = _lw(c0, c1, c2, X[i, 0], X[i, 1], X[i, 2])
    with nogil:
        for k in range(n_sweeps):
            for i in range(n):
                xi = X[i, 0]
                yi = X[i, 1]
                ti = X[i, 2]
                dx = steps[k, i, 0]
                dy = steps[k, i, 1]
                dt = steps[k, i, 2]
                nx = dx + xi
                ny = dy + yi
                nt = dt + ti + 2.0 * (dx * yi - dy * xi)
                s = nx * nx + ny * ny
                if s * s + nt * nt > radius4:
                    continue
                new_lw = _lw(c0, c1, c2, nx, ny, nt)
                dlog = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    xj = X[j, 0]
                    yj = X[j, 1]
                    tj = X[j, 2]
                    ax = xi - xj
                    ay = yi - yj
                    at = ti - tj + 2.0 * (yj * xi - xj * yi)
                    ar = ax * ax + ay * ay
                    bx = nx - xj
                    by = ny - yj
                    bt = nt - tj + 2.0 * (yj * nx - xj * ny)
                    br = bx * bx + by * by
                    dlog = dlog + (log(ar * ar + at * at) - log(br * br + bt * bt))
                dlog = 0.25 * pair_coef * dlog + new_lw - lw[i]
                if logu[k, i] < dlog:
                    X[i, 0] = nx
                    X[i, 1] = ny
                    X[i, 2] = nt
                    lw[i] = new_lw
                    accepted += 1
            idx = first_sweep + k
            if idx >= burn_in and (idx - burn_in) % thin == 0:
                for i in range(n):
                    out[rec, i, 0] = X[i, 0]
                    out[rec, i, 1] = X[i, 1]
                    out[rec, i, 2] = X[i, 2]
                rec += 1
    return accepted, rec

