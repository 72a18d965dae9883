# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`rcv._fallback` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, exp, fabs, floor, sqrt, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _wrap(double d) nogil:
    # map to [-pi, pi)
    return d - TWO_PI * floor((d + M_PI) / TWO_PI)


cdef inline double _wn_series(double delta, const double[:] coef, int kmax) nogil:
    # (1/2pi)(1 + 2 sum_k rho^{k^2} cos(k delta)) via the Chebyshev recurrence for cos(k delta)
    cdef double c1 = cos(delta)
    cdef double ckm1 = 1.0
    cdef double ck = c1
    cdef double acc = 0.0
    cdef double tmp
    cdef int k
    for k in range(1, kmax + 1):
        acc += coef[k] * ck
        tmp = 2.0 * c1 * ck - ckm1
        ckm1 = ck
        ck = tmp
    acc = (1.0 + 2.0 * acc) / TWO_PI
    return acc if acc > 0.0 else 0.0


cdef inline double _wn_images(double delta, double s, int mmax) nogil:
    cdef double acc = 0.0
    cdef double u
    cdef int m
    delta = _wrap(delta)
    for m in range(-mmax, mmax + 1):
        u = (delta + TWO_PI * m) / s
        acc += exp(-0.5 * u * u)
    return acc / (s * sqrt(TWO_PI))


cdef inline double _wn(double delta, double s, const double[:] coef, int kmax, int mode, int mmax) nogil:
    if mode == 0:
        return _wn_series(delta, coef, kmax)
    return _wn_images(delta, s, mmax)


def wrapped_normal(cnp.ndarray delta, double s, double[:] coef, int kmax, int mode, int mmax):
    cdef double[:] d = np.ascontiguousarray(delta, dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = d.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            o[i] = _wn(d[i], s, coef, kmax, mode, mmax)
    return out.reshape(np.shape(delta))


def torus_kernel(double[:, :] x, double[:, :] y,
                 double s_slow, double[:] coef_slow, int kmax_slow, int mode_slow,
                 double s_fast, double[:] coef_fast, int kmax_fast, int mode_fast,
                 int limit, int mmax):
    """Row-wise p(x_i, y_i) for equally long point arrays."""
    cdef Py_ssize_t i, j, m = x.shape[0], n = x.shape[1]
    cdef double v, c = (1.0 / TWO_PI) ** (n - 1)
    out = np.empty(m, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for i in range(m):
            v = _wn(y[i, 0] - x[i, 0], s_slow, coef_slow, kmax_slow, mode_slow, mmax)
            if limit:
                v *= c
            else:
                for j in range(1, n):
                    v *= _wn(y[i, j] - x[i, j], s_fast, coef_fast, kmax_fast, mode_fast, mmax)
            o[i] = v
    return out


def torus_pair_integrand(double[:, :] x, double[:, :, :] y1, double[:, :, :] y2, double scale,
                         double s_slow, double[:] coef_slow, int kmax_slow, int mode_slow,
                         double s_fast, double[:] coef_fast, int kmax_fast, int mode_fast,
                         int limit, int mmax):
    """f(x_m) = mean over levels and pairs of scale*|p(x_m, y1) - p(x_m, y2)|."""
    cdef Py_ssize_t a, l, q, j
    cdef Py_ssize_t nx = x.shape[0], n = x.shape[1], nl = y1.shape[0], npair = y1.shape[1]
    cdef double acc, v1, v2, c = (1.0 / TWO_PI) ** (n - 1)
    out = np.empty(nx, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for a in range(nx):
            acc = 0.0
            for l in range(nl):
                for q in range(npair):
                    v1 = _wn(y1[l, q, 0] - x[a, 0], s_slow, coef_slow, kmax_slow, mode_slow, mmax)
                    v2 = _wn(y2[l, q, 0] - x[a, 0], s_slow, coef_slow, kmax_slow, mode_slow, mmax)
                    if limit:
                        v1 *= c
                        v2 *= c
                    else:
                        for j in range(1, n):
                            v1 *= _wn(y1[l, q, j] - x[a, j], s_fast, coef_fast, kmax_fast, mode_fast, mmax)
                            v2 *= _wn(y2[l, q, j] - x[a, j], s_fast, coef_fast, kmax_fast, mode_fast, mmax)
                    acc += fabs(v1 - v2)
            o[a] = scale * acc / (nl * npair)
    return out


def kde_eval(double[:, :] points, double[:] h, double[:, :] q):
    """Mean of axis-aligned Gaussian product kernels centred at ``points``."""
    cdef Py_ssize_t i, j, k, nq = q.shape[0], npts = points.shape[0], d = points.shape[1]
    cdef double acc, r2, u, norm = 1.0
    for k in range(d):
        norm *= h[k] * sqrt(TWO_PI)
    out = np.empty(nq, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for i in range(nq):
            acc = 0.0
            for j in range(npts):
                r2 = 0.0
                for k in range(d):
                    u = (q[i, k] - points[j, k]) / h[k]
                    r2 += u * u
                if r2 < 1400.0:
                    acc += exp(-0.5 * r2)
            o[i] = acc / (npts * norm)
    return out
