"""Closed-form transition kernels of the slow-fast Brownian motion on the n-torus.

The slow coordinate ``x_1`` diffuses with unit coefficient, the remaining
coordinates with coefficient ``sigma``.  Transition densities are products of
wrapped normal densities; ``sigma = INF`` selects the limit process in which
the fast coordinates equilibrate instantly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

from .backend import kernels

TWO_PI = 2.0 * np.pi

#: Below this standard deviation the cosine series converges slowly and the
#: image sum is used instead.
IMAGE_SUM_BELOW = 0.25
IMAGE_TERMS = 6


class Limit(enum.Enum):
    """Marker for the ``sigma -> infinity`` limit process."""

    INF = "inf"

    def __repr__(self):
        return "INF"


INF = Limit.INF
Sigma = Union[float, Limit]


def parse_sigma(value) -> Sigma:
    """Accept floats, ``INF`` or the strings ``"inf"``/``"infinity"``."""
    if value is INF:
        return INF
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return INF
        value = float(value)
    value = float(value)
    if np.isinf(value) and value > 0:
        return INF
    if not value > 0:
        raise ValueError(f"sigma must be positive, got {value}")
    return value


def sigma_label(sigma: Sigma) -> str:
    return "inf" if sigma is INF else repr(float(sigma))


def wrap_angle(a):
    """Map angles to ``[-pi, pi)``."""
    a = np.asarray(a, dtype=np.float64)
    return a - TWO_PI * np.floor((a + np.pi) / TWO_PI)


@dataclass(frozen=True)
class WrappedNormalParams:
    """Wrapped normal with standard deviation ``sigma``; ``rho = exp(-sigma**2 / 2)``."""

    sigma: float
    threshold: float = 1e-16

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"wrapped normal needs sigma > 0 (got {self.sigma}); "
                             "the delta distribution is not representable")

    @property
    def rho(self) -> float:
        return float(np.exp(-0.5 * self.sigma ** 2))

    @property
    def uses_images(self) -> bool:
        return self.sigma < IMAGE_SUM_BELOW

    def series(self):
        """Return ``(coef, kmax)`` with ``coef[k] = rho**(k**2)``, truncated at the
        first ``k`` whose term drops below ``threshold``."""
        if self.uses_images:
            return np.zeros(1), 0
        # rho^{k^2} < threshold  <=>  k^2 sigma^2 / 2 > -log(threshold)
        kmax = int(np.floor(np.sqrt(-2.0 * np.log(self.threshold)) / self.sigma))
        k = np.arange(kmax + 1, dtype=np.float64)
        coef = np.exp(-0.5 * (self.sigma * k) ** 2)
        return coef, kmax

    def backend_args(self):
        coef, kmax = self.series()
        return self.sigma, coef, kmax, 1 if self.uses_images else 0


def wrapped_normal_density(delta, sigma: float, threshold: float = 1e-16):
    """Density of the wrapped normal at angle difference ``delta``.

    Evaluates ``(1/2pi) (1 + 2 sum_k rho^{k^2} cos(k delta))``, clamped at 0,
    or the image sum ``sum_m N(delta + 2 pi m; 0, sigma^2)`` for ``sigma < 0.25``.
    """
    params = WrappedNormalParams(float(sigma), threshold)
    s, coef, kmax, mode = params.backend_args()
    scalar = np.ndim(delta) == 0
    out = kernels.wrapped_normal(np.asarray(delta, dtype=np.float64), s, coef, kmax, mode, IMAGE_TERMS)
    return float(out) if scalar else out


def wrapped_normal_images(delta, sigma: float, terms: int = IMAGE_TERMS):
    """Unwrapped Gaussian summed over images ``delta + 2 pi m``, ``|m| <= terms``."""
    m = np.arange(-terms, terms + 1)
    d = wrap_angle(delta)[..., None] + TWO_PI * m
    return np.exp(-0.5 * (d / sigma) ** 2).sum(axis=-1) / (sigma * np.sqrt(TWO_PI))


@dataclass(frozen=True)
class TorusPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=np.float64))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("a torus point needs n >= 1 coordinates")
        object.__setattr__(self, "coords", wrap_angle(c))

    @property
    def n(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class TorusKernelSpec:
    """Lag ``tau`` and fast-direction diffusion ``sigma`` of the ``n``-torus process."""

    n: int
    tau: float
    sigma: Sigma = INF

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        object.__setattr__(self, "sigma", parse_sigma(self.sigma))

    @property
    def is_limit(self) -> bool:
        return self.sigma is INF

    @property
    def volume(self) -> float:
        return TWO_PI ** self.n

    def stationary_density(self, x=None) -> float:
        """Uniform: ``(2 pi)^-n`` everywhere."""
        return 1.0 / self.volume

    def _args(self):
        slow = WrappedNormalParams(self.tau).backend_args()
        if self.is_limit:
            fast = (1.0, np.zeros(1), 0, 0)
        else:
            fast = WrappedNormalParams(self.tau * self.sigma).backend_args()
        return (*slow, *fast, int(self.is_limit), IMAGE_TERMS)

    def density(self, x, y):
        """Vectorised ``p(x_i, y_i)``; ``x`` broadcasts against ``y`` (shape ``(..., n)``)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape[-1] != self.n or y.shape[-1] != self.n:
            raise ValueError(f"points must have dimension {self.n}")
        x, y = np.broadcast_arrays(x, y)
        shape = x.shape[:-1]
        x2 = np.ascontiguousarray(x.reshape(-1, self.n))
        y2 = np.ascontiguousarray(y.reshape(-1, self.n))
        return kernels.torus_kernel(x2, y2, *self._args()).reshape(shape)

    def pair_integrand(self, x, y1, y2, scale: float):
        """``scale * mean |p(x, y1) - p(x, y2)|`` over all level/pair slots, per row of ``x``."""
        return kernels.torus_pair_integrand(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(y1, dtype=np.float64),
            np.ascontiguousarray(y2, dtype=np.float64),
            float(scale), *self._args())

    def forward_grid(self, x, nodes: int):
        """``p(x, .)`` tabulated on the ``nodes**n`` trapezoid grid, as an n-d array."""
        grid = torus_grid(nodes)
        x = np.asarray(x, dtype=np.float64)
        out = wrapped_normal_density(grid - x[0], self.tau)
        if self.is_limit:
            for _ in range(1, self.n):
                out = np.multiply.outer(out, np.full(nodes, 1.0 / TWO_PI))
        else:
            for j in range(1, self.n):
                out = np.multiply.outer(out, wrapped_normal_density(grid - x[j], self.tau * self.sigma))
        return out


def torus_grid(nodes: int) -> np.ndarray:
    """Trapezoid nodes on ``[-pi, pi)`` (periodic rule; weight ``2 pi / nodes``)."""
    return -np.pi + TWO_PI * np.arange(nodes) / nodes


def kernel_density(spec: TorusKernelSpec, x, y) -> float:
    x = x.coords if isinstance(x, TorusPoint) else np.asarray(x, dtype=np.float64)
    y = y.coords if isinstance(y, TorusPoint) else np.asarray(y, dtype=np.float64)
    if x.shape != (spec.n,) or y.shape != (spec.n,):
        raise ValueError(f"dimension mismatch: spec.n={spec.n}, x{x.shape}, y{y.shape}")
    return float(spec.density(x, y))


def effective_density_pL(spec: TorusKernelSpec, z, y):
    """Effective lumped density ``(2 pi)^{-(n-1)} g^tau(z, y_1)``."""
    if spec.n < 2:
        raise ValueError("effective density needs n >= 2")
    y = y.coords if isinstance(y, TorusPoint) else np.asarray(y, dtype=np.float64)
    if y.shape[-1] != spec.n:
        raise ValueError(f"y must have dimension {spec.n}")
    return wrapped_normal_density(y[..., 0] - z, spec.tau) / TWO_PI ** (spec.n - 1)


def lumpability_distance(spec: TorusKernelSpec, nodes: int = 256, max_dim: int = 4) -> float:
    """K-norm distance between the kernel and its lumped counterpart for ``xi(x) = x_1``.

    Translation invariance reduces the 2n-dimensional integral to one over the
    n-1 fast difference angles; the slow factor integrates to one.
    """
    if spec.is_limit:
        return 0.0
    dim = spec.n - 1
    if dim == 0:
        return 0.0
    if dim > max_dim:
        raise ValueError(f"tensor quadrature over {dim} dimensions exceeds the cap of {max_dim}; "
                         "use a Monte Carlo estimate instead")
    g = wrapped_normal_density(torus_grid(nodes), spec.tau * spec.sigma)
    h = TWO_PI / nodes
    prod = g
    for _ in range(1, dim):
        prod = np.multiply.outer(prod, g)
    return float(np.abs(prod - TWO_PI ** -dim).sum() * h ** dim)


def lumpability_distance_mc(spec: TorusKernelSpec, n_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo fallback for high ``n``; returns ``(estimate, std_error)``."""
    if spec.is_limit or spec.n == 1:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    d = rng.uniform(-np.pi, np.pi, size=(n_samples, spec.n - 1))
    prod = np.prod(wrapped_normal_density(d, spec.tau * spec.sigma), axis=1)
    vals = np.abs(prod * TWO_PI ** (spec.n - 1) - 1.0)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))


def tensor_integral(values: np.ndarray) -> float:
    """Trapezoid integral over ``[-pi, pi)^d`` of values tabulated by :func:`torus_grid`."""
    h = TWO_PI / values.shape[0]
    return float(values.sum() * h ** values.ndim)


def normalization_check(spec: TorusKernelSpec, x, nodes: int = 256) -> float:
    """Trapezoid integral of ``p(x, .)`` over the torus (should be 1)."""
    return tensor_integral(spec.forward_grid(np.asarray(x, dtype=np.float64), nodes))


def decay_slope(sigmas, distances) -> float:
    """Least-squares slope of ``log distance`` against ``sigma**2``."""
    s2 = np.asarray(sigmas, dtype=float) ** 2
    return float(np.polyfit(s2, np.log(np.asarray(distances, dtype=float)), 1)[0])


