"""Candidate reaction coordinates and samplers of the level-set measures ``mu_z``.

``mu_z`` is always normalised to a probability measure on its level set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog


class EmptyLevelSetError(ValueError):
    """The requested level set is empty or carries numerically zero mass."""


class SingularityError(ValueError):
    """A coordinate was evaluated on its singular set."""


@dataclass(frozen=True)
class ReactionCoordinate:
    """A map ``x -> z`` from state space to a one-dimensional range ``[lo, hi]``.

    ``kind`` is one of ``linear-torus``, ``polar-angle``, ``polar-radius`` or
    ``custom``; custom coordinates must provide ``sampler``.
    """

    eval: Callable
    grad: Callable
    range: tuple
    kind: str
    name: str = ""
    weights: Optional[np.ndarray] = None
    r_max: float = 2.0
    sampler: Optional[Callable] = field(default=None, compare=False)

    def __call__(self, x):
        return self.eval(x)

    @property
    def range_measure(self) -> float:
        return float(self.range[1] - self.range[0])

    def levels(self, n_z: int) -> np.ndarray:
        """Midpoint nodes of a uniform ``n_z``-cell grid on the range."""
        lo, hi = self.range
        return lo + (hi - lo) * (np.arange(n_z) + 0.5) / n_z


@dataclass
class LevelSetSample:
    """Weighted points on a level set.

    ``mass`` is the unnormalised level mass ``int pi det(grad^T grad)^{-1/2} dH``,
    i.e. the density of ``rc(X)`` at ``z`` for ``X ~ mu``, when the sampler knows it.
    """

    z: float
    points: np.ndarray
    weights: np.ndarray
    mass: Optional[float] = None

    def mean(self, f) -> float:
        return float(np.sum(self.weights * f(self.points)))


# -- linear coordinates on the torus box ------------------------------------------------

def linear_rc(weights, name: str = "") -> ReactionCoordinate:
    """``x -> w.x / (pi * sum|w_i|)`` on ``[-pi, pi]^n``; the range is exactly ``[-1, 1]``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or not np.any(w):
        raise ValueError("weights must be a nonzero vector")
    # cos(pi/2) and friends: round-off weights would make the level sections degenerate
    w = np.where(np.abs(w) < 1e-12 * np.abs(w).max(), 0.0, w)
    scale = 1.0 / (np.pi * np.abs(w).sum())
    g = w * scale

    def ev(x):
        return np.asarray(x, dtype=np.float64) @ g

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(g, x.shape).copy()

    return ReactionCoordinate(ev, grad, (-1.0, 1.0), "linear-torus",
                              name or "linear" + str(tuple(np.round(w, 6))), w)


def linear_rc_alpha(alpha: float) -> ReactionCoordinate:
    """Rotated linear coordinate ``(cos a, sin a).x`` normalised to range ``[-1, 1]``."""
    if not -np.pi < alpha < np.pi:
        raise ValueError("alpha must lie in (-pi, pi)")
    return linear_rc([np.cos(alpha), np.sin(alpha)], name=f"theta_alpha={alpha:.6g}")


def linear_level_density(rc: ReactionCoordinate, z):
    """Density of ``rc(X)`` at ``z`` for ``X`` uniform on ``[-pi, pi]^n``.

    ``w.X`` is a sum of independent centred uniforms; its density is the
    box spline ``sum_eps (-1)^|eps| (s + C - 2 eps.c)_+^(k-1) / ((k-1)! prod 2 c_i)``
    over the ``k`` nonzero half-widths ``c_i = pi |w_i|``.
    """
    from itertools import product
    from math import factorial

    c = np.pi * np.abs(rc.weights[rc.weights != 0])
    k = c.size
    total = c.sum()
    z = np.asarray(z, dtype=np.float64)
    s = z * total
    out = np.zeros_like(s)
    for eps in product((0, 1), repeat=k):
        shift = total - 2.0 * np.dot(eps, c)
        arg = s + shift
        term = np.where(arg > 0, arg, 0.0) ** (k - 1) if k > 1 else (arg > 0).astype(float)
        out += (-1) ** sum(eps) * term
    out = np.maximum(out / (factorial(k - 1) * np.prod(2.0 * c)), 0.0) * total
    return out if out.ndim else float(out)


def _section_frame(w, c):
    """Base point and orthonormal complement basis of the hyperplane ``w.x = c``."""
    n = w.size
    u = w / np.linalg.norm(w)
    x0 = c * w / (w @ w)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(n)]))
    basis = q[:, 1:n]
    return x0, basis


def _section_box(x0, basis):
    """Bounding box, in frame coordinates, of the hyperplane section of ``[-pi, pi]^n``."""
    k = basis.shape[1]
    a_ub = np.vstack([basis, -basis])
    b_ub = np.concatenate([np.pi - x0, np.pi + x0])
    lo = np.empty(k)
    hi = np.empty(k)
    for j in range(k):
        c = np.zeros(k)
        c[j] = 1.0
        for sign, out in ((1.0, lo), (-1.0, hi)):
            res = linprog(sign * c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * k, method="highs")
            if res.status != 0:
                return None
            out[j] = res.x[j]
    return lo, hi


def sample_level_set_linear(rc: ReactionCoordinate, z: float, n: int, seed) -> LevelSetSample:
    """Uniform samples on ``{x in [-pi, pi]^d : rc(x) = z}``.

    The section is parametrised by an orthonormal frame of the hyperplane and
    rejection-sampled from its bounding box, so the samples follow the
    Hausdorff measure; with uniform ``pi`` and constant gradient this is ``mu_z``.
    """
    if rc.kind != "linear-torus":
        raise ValueError("sample_level_set_linear needs a linear torus coordinate")
    rng = np.random.default_rng(seed)
    w = rc.weights
    d = w.size
    c = z * np.pi * np.abs(w).sum()
    if abs(z) > 1.0:
        raise EmptyLevelSetError(f"level z={z} lies outside the attainable range [-1, 1]")
    if d == 1:
        pts = np.full((n, 1), c / w[0])
        return LevelSetSample(z, pts, np.full(n, 1.0 / n), linear_level_density(rc, z))
    x0, basis = _section_frame(w, c)
    box = _section_box(x0, basis)
    if box is None:
        raise EmptyLevelSetError(f"level z={z} is empty for weights {w}")
    lo, hi = box
    k = basis.shape[1]
    if k == 1:
        t = lo + (hi - lo) * rng.random((n, 1))
        pts = x0 + t @ basis.T
    else:
        chunks = []
        got = 0
        while got < n:
            t = lo + (hi - lo) * rng.random((max(2 * (n - got), 64), k))
            cand = x0 + t @ basis.T
            ok = np.all(np.abs(cand) <= np.pi, axis=1)
            chunks.append(cand[ok])
            got += int(ok.sum())
        pts = np.concatenate(chunks)[:n]
    # project back onto the level set to remove rounding drift
    pts = pts + np.outer(c - pts @ w, w / (w @ w))
    pts = np.clip(pts, -np.pi, np.pi)
    return LevelSetSample(z, pts, np.full(n, 1.0 / n), linear_level_density(rc, z))


# -- polar coordinates in the plane ------------------------------------------------------

def _polar_checked(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 2:
        raise ValueError("polar coordinates need 2-dimensional states")
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r == 0.0):
        raise SingularityError("polar coordinates are singular at the origin")
    return x, r


def polar_rc(which: str, r_max: float = 2.0) -> ReactionCoordinate:
    """``which='angle'``: ``atan2``, range ``[-pi, pi)``; ``which='radius'``: norm, range ``(0, r_max]``."""
    if which == "angle":
        def ev(x):
            x, _ = _polar_checked(x)
            return np.arctan2(x[..., 1], x[..., 0])

        def grad(x):
            x, r = _polar_checked(x)
            return np.stack([-x[..., 1], x[..., 0]], axis=-1) / (r ** 2)[..., None]

        return ReactionCoordinate(ev, grad, (-np.pi, np.pi), "polar-angle", "phi", r_max=float(r_max))
    if which == "radius":
        def ev(x):
            x, r = _polar_checked(x)
            return r

        def grad(x):
            x, r = _polar_checked(x)
            return x / r[..., None]

        return ReactionCoordinate(ev, grad, (0.0, float(r_max)), "polar-radius", "r", r_max=float(r_max))
    raise ValueError(f"unknown polar coordinate {which!r}")


def hausdorff_correction(rc: ReactionCoordinate, x) -> np.ndarray:
    """``det(grad^T grad)^{-1/2}`` for a scalar coordinate, i.e. ``1/|grad|``."""
    g = np.atleast_2d(rc.grad(x))
    return 1.0 / np.linalg.norm(g, axis=-1)


def _inverse_cdf(nodes, dens, u):
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(nodes))])
    total = cdf[-1]
    if not total > 1e-300:
        return None, 0.0
    return np.interp(u * total, cdf, nodes), total


def sample_level_set_weighted(rc: ReactionCoordinate, z: float, stationary_density, n: int, seed,
                              nodes: int = 2048) -> LevelSetSample:
    """Samples of ``mu_z`` for the polar coordinates, by tabulated inverse CDF.

    Angle: the ray at angle ``z`` with density ``pi(t e_z) * t`` on ``(0, r_max]``.
    Radius: the circle of radius ``z`` with density ``pi(z e_phi)``.
    """
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    if rc.kind == "polar-angle":
        t = np.linspace(0.0, rc.r_max, nodes)
        pts = np.column_stack([t * np.cos(z), t * np.sin(z)])
        dens = stationary_density(pts) * t
        s, mass = _inverse_cdf(t, dens, u)
        if s is None:
            raise EmptyLevelSetError(f"angle level set z={z} carries no stationary mass")
        s = np.maximum(s, 1e-12)
        out = np.column_stack([s * np.cos(z), s * np.sin(z)])
    elif rc.kind == "polar-radius":
        if not z > 0:
            raise EmptyLevelSetError("radius level sets need z > 0")
        phi = np.linspace(-np.pi, np.pi, nodes)
        dens = stationary_density(np.column_stack([z * np.cos(phi), z * np.sin(phi)]))
        a, mass = _inverse_cdf(phi, dens, u)
        mass *= z
        if a is None:
            raise EmptyLevelSetError(f"radius level set z={z} carries no stationary mass")
        out = np.column_stack([z * np.cos(a), z * np.sin(a)])
    else:
        raise ValueError("weighted level-set sampling supports the polar coordinates only")
    return LevelSetSample(z, out, np.full(n, 1.0 / n), float(mass))


def sample_level_set(rc: ReactionCoordinate, z: float, n: int, seed, stationary_density=None) -> LevelSetSample:
    """Dispatch to the sampler appropriate for ``rc.kind``."""
    if rc.kind == "linear-torus":
        return sample_level_set_linear(rc, z, n, seed)
    if rc.kind in ("polar-angle", "polar-radius"):
        if stationary_density is None:
            raise ValueError("polar level sets need the stationary density")
        return sample_level_set_weighted(rc, z, stationary_density, n, seed)
    if rc.sampler is None:
        raise ValueError(f"custom coordinate {rc.name!r} provides no level-set sampler")
    return rc.sampler(z, n, seed)
