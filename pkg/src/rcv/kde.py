"""Fixed-bandwidth Gaussian product-kernel density estimates of burst endpoint clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backend import kernels


class DegenerateDataError(ValueError):
    pass


class CoverageError(ValueError):
    def __init__(self, msg, suggested_box=None):
        super().__init__(msg)
        self.suggested_box = suggested_box


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    """Per-axis ``std_i * (4 / ((d + 2) N))^(1 / (d + 4))``."""
    points = np.atleast_2d(points)
    n, d = points.shape
    std = points.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return std * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


@dataclass(frozen=True)
class KdeDensity:
    points: np.ndarray
    bandwidth: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __call__(self, y):
        return kde_eval(self, y)

    def support_box(self, width: float = 4.0) -> np.ndarray:
        lo = self.points.min(axis=0) - width * self.bandwidth
        hi = self.points.max(axis=0) + width * self.bandwidth
        return np.column_stack([lo, hi])


def kde_fit(ensemble, bandwidth: Optional[np.ndarray] = None) -> KdeDensity:
    """Fit to a :class:`~rcv.sde.BurstEnsemble` or an ``(N, d)`` point array.

    Without ``bandwidth`` the per-axis Silverman rule is applied.
    """
    pts = getattr(ensemble, "endpoints", ensemble)
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=np.float64)))
    if pts.shape[0] < 1:
        raise ValueError("cannot fit a KDE to an empty point set")
    d = pts.shape[1]
    if bandwidth is None:
        h = silverman_bandwidth(pts)
        if not np.all(h > 0):
            raise DegenerateDataError("endpoints are degenerate along some axis; pass a bandwidth")
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (d,)).copy()
        if not np.all(h > 0):
            raise ValueError("bandwidths must be positive")
    return KdeDensity(pts, h)


def kde_eval(density: KdeDensity, y) -> np.ndarray | float:
    """``(1/N) sum_j prod_i N(y_i - p_ji; h_i)``; ``y`` is a point or an ``(M, d)`` batch."""
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 1
    q = np.ascontiguousarray(np.atleast_2d(y))
    if q.shape[1] != density.dim:
        raise ValueError(f"query dimension {q.shape[1]} != density dimension {density.dim}")
    out = kernels.kde_eval(density.points, density.bandwidth, q)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid of ``nodes`` points per axis on ``box``; midpoint-cell quadrature."""

    box: np.ndarray
    nodes: int = 128

    def points(self):
        axes = [lo + (hi - lo) * (np.arange(self.nodes) + 0.5) / self.nodes for lo, hi in self.box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod((self.box[:, 1] - self.box[:, 0]) / self.nodes))


def _covers(box, inner):
    return np.all(box[:, 0] <= inner[:, 0]) and np.all(box[:, 1] >= inner[:, 1])


def l1_distance(a: KdeDensity, b: KdeDensity, quad: GridSpec) -> float:
    """Grid quadrature of ``|a - b|``; the grid must cover both 4-bandwidth supports."""
    box = np.asarray(quad.box, dtype=float)
    need = np.column_stack([np.minimum(a.support_box()[:, 0], b.support_box()[:, 0]),
                            np.maximum(a.support_box()[:, 1], b.support_box()[:, 1])])
    if not _covers(box, need):
        raise CoverageError(f"grid box {box.tolist()} does not cover the densities' support",
                            suggested_box=need)
    pts = quad.points()
    return float(np.abs(a(pts) - b(pts)).sum() * quad.cell_volume)


def grid_integral(density: KdeDensity, quad: GridSpec) -> float:
    return float(density(quad.points()).sum() * quad.cell_volume)
