"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

TWO_PI = 2.0 * np.pi


def _wrap(d):
    return d - TWO_PI * np.floor((d + np.pi) / TWO_PI)


def _wn(delta, s, coef, kmax, mode, mmax):
    delta = np.asarray(delta, dtype=np.float64)
    if mode == 0:
        k = np.arange(1, kmax + 1)
        acc = np.cos(delta[..., None] * k) @ np.asarray(coef)[1:kmax + 1]
        return np.maximum((1.0 + 2.0 * acc) / TWO_PI, 0.0)
    m = np.arange(-mmax, mmax + 1)
    u = (_wrap(delta)[..., None] + TWO_PI * m) / s
    return np.exp(-0.5 * u * u).sum(axis=-1) / (s * np.sqrt(TWO_PI))


def wrapped_normal(delta, s, coef, kmax, mode, mmax):
    return _wn(delta, s, coef, kmax, mode, mmax)


def _product(x, y, s_slow, coef_slow, kmax_slow, mode_slow,
             s_fast, coef_fast, kmax_fast, mode_fast, limit, mmax):
    n = x.shape[-1]
    v = _wn(y[..., 0] - x[..., 0], s_slow, coef_slow, kmax_slow, mode_slow, mmax)
    if limit:
        return v * (1.0 / TWO_PI) ** (n - 1)
    for j in range(1, n):
        v = v * _wn(y[..., j] - x[..., j], s_fast, coef_fast, kmax_fast, mode_fast, mmax)
    return v


def torus_kernel(x, y, s_slow, coef_slow, kmax_slow, mode_slow,
                 s_fast, coef_fast, kmax_fast, mode_fast, limit, mmax):
    return _product(np.asarray(x), np.asarray(y), s_slow, coef_slow, kmax_slow, mode_slow,
                    s_fast, coef_fast, kmax_fast, mode_fast, limit, mmax)


def torus_pair_integrand(x, y1, y2, scale, s_slow, coef_slow, kmax_slow, mode_slow,
                         s_fast, coef_fast, kmax_fast, mode_fast, limit, mmax):
    x = np.asarray(x)
    y1 = np.asarray(y1)
    y2 = np.asarray(y2)
    args = (s_slow, coef_slow, kmax_slow, mode_slow, s_fast, coef_fast, kmax_fast, mode_fast, limit, mmax)
    out = np.empty(len(x))
    for a in range(len(x)):
        v1 = _product(x[a], y1, *args)
        v2 = _product(x[a], y2, *args)
        out[a] = scale * np.abs(v1 - v2).mean()
    return out


def kde_eval(points, h, q, chunk=2048):
    points = np.asarray(points)
    h = np.asarray(h)
    q = np.asarray(q)
    norm = np.prod(h * np.sqrt(TWO_PI))
    out = np.empty(len(q))
    for start in range(0, len(q), chunk):
        u = (q[start:start + chunk, None, :] - points[None, :, :]) / h
        r2 = np.einsum("ijk,ijk->ij", u, u)
        out[start:start + chunk] = np.where(r2 < 1400.0, np.exp(-0.5 * r2), 0.0).sum(axis=1)
    return out / (len(points) * norm)
