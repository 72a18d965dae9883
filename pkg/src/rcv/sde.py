"""Overdamped Langevin dynamics: Euler-Maruyama bursts, Gibbs density, Metropolis sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

log = logging.getLogger(__name__)


class IntegrationError(FloatingPointError):
    """Non-finite drift encountered during integration."""

    def __init__(self, msg, point=None, replica=None):
        super().__init__(msg)
        self.point = point
        self.replica = replica


class SamplerConfigError(RuntimeError):
    """Metropolis proposal tuning failed."""


@dataclass(frozen=True)
class Potential:
    """Energy ``value(x)`` and ``gradient(x)`` for arrays of points ``(..., d)``."""

    value: Callable
    gradient: Callable
    domain_box: np.ndarray
    name: str = "potential"

    @property
    def dim(self) -> int:
        return len(self.domain_box)


def circular_potential(sigma: float, box: float = 2.0) -> Potential:
    """``cos(5 phi) + sigma (r - 1)^2``: five wells on the unit circle."""
    if not sigma > 0:
        raise ValueError("radial stiffness sigma must be > 0")

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        r = np.hypot(x[..., 0], x[..., 1])
        return np.cos(5.0 * np.arctan2(x[..., 1], x[..., 0])) + sigma * (r - 1.0) ** 2

    def gradient(x):
        x = np.asarray(x, dtype=np.float64)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        r = np.sqrt(r2)
        phi = np.arctan2(x[..., 1], x[..., 0])
        # d/dx cos(5 phi) = -5 sin(5 phi) * grad(phi),  grad(phi) = (-y, x) / r^2
        with np.errstate(divide="ignore", invalid="ignore"):
            a = -5.0 * np.sin(5.0 * phi) / r2
            b = 2.0 * sigma * (r - 1.0) / r
        gx = a * -x[..., 1] + b * x[..., 0]
        gy = a * x[..., 0] + b * x[..., 1]
        return np.stack([gx, gy], axis=-1)

    return Potential(value, gradient, np.array([[-box, box], [-box, box]], dtype=float),
                     f"circular(sigma={sigma:g})")


def quadratic_potential(dim: int = 2, box: float = 6.0) -> Potential:
    """``|x|^2 / 2``."""
    return Potential(lambda x: 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
                     lambda x: np.asarray(x, dtype=float).copy(),
                     np.array([[-box, box]] * dim, dtype=float), "quadratic")


def double_well_potential(barrier: float = 1.0, box: float = 2.0) -> Potential:
    """One-dimensional ``barrier * (x^2 - 1)^2``."""

    def value(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return barrier * (x ** 2 - 1.0) ** 2

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return 4.0 * barrier * x * (x ** 2 - 1.0)

    return Potential(value, gradient, np.array([[-box, box]], dtype=float), f"double_well({barrier:g})")


def flat_potential(dim: int = 2, box: float = 1.0) -> Potential:
    return Potential(lambda x: np.zeros(np.shape(x)[:-1]),
                     lambda x: np.zeros(np.shape(x)),
                     np.array([[-box, box]] * dim, dtype=float), "flat")


@dataclass(frozen=True)
class SdeConfig:
    """Integrator settings; ``tau`` must be an integer multiple of ``dt``."""

    beta: float = 1.0
    dt: float = 1e-3
    tau: float = 0.1
    seed: int = 0
    substep_threshold: float = 0.5
    substeps: int = 10

    def __post_init__(self):
        if not (self.beta > 0 and self.dt > 0 and self.tau > 0):
            raise ValueError("beta, dt and tau must be positive")
        ratio = self.tau / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError(f"tau={self.tau} is not a positive integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.tau / self.dt))


@dataclass
class BurstEnsemble:
    start: np.ndarray
    endpoints: np.ndarray
    tau: float
    meta: SdeConfig = field(repr=False)

    def __post_init__(self):
        if len(self.endpoints) < 1:
            raise ValueError("a burst needs at least one endpoint")
        if not np.all(np.isfinite(self.endpoints)):
            raise IntegrationError("burst contains non-finite endpoints", point=self.start)

    @property
    def n(self) -> int:
        return len(self.endpoints)


def em_step(x, potential: Potential, config: SdeConfig, noise):
    """One Euler-Maruyama step ``x - grad V(x) dt + sqrt(2 dt / beta) noise``.

    Works row-wise on ``(N, d)`` arrays.  Rows whose drift displacement exceeds
    ``substep_threshold`` are integrated with ``substeps`` finer steps, splitting
    the same Brownian increment evenly.
    """
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x.shape:
        raise ValueError(f"noise shape {noise.shape} does not match state shape {x.shape}")
    dt = config.dt
    g = potential.gradient(x)
    if not np.all(np.isfinite(g)):
        bad = np.argwhere(~np.isfinite(g).all(axis=-1)) if g.ndim > 1 else None
        pt = x[tuple(bad[0])] if bad is not None and len(bad) else x
        raise IntegrationError(f"non-finite gradient at {pt}", point=pt)
    amp = np.sqrt(2.0 * dt / config.beta)
    out = x - g * dt + amp * noise
    stiff = np.linalg.norm(np.atleast_2d(g), axis=-1) * dt > config.substep_threshold
    if np.any(stiff):
        xs = np.atleast_2d(x)[stiff]
        dw = np.atleast_2d(noise)[stiff] * amp / config.substeps
        h = dt / config.substeps
        for _ in range(config.substeps):
            gs = potential.gradient(xs)
            if not np.all(np.isfinite(gs)):
                raise IntegrationError("non-finite gradient during sub-stepping", point=xs[0])
            xs = xs - gs * h + dw
        if out.ndim == 1:
            out = xs[0]
        else:
            out[stiff] = xs
    return out


def burst_rng(seed, index=0) -> np.random.Generator:
    """Independent stream for task ``index`` of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def simulate_paths(x0, potential: Potential, config: SdeConfig, rng: np.random.Generator):
    """Integrate an ``(N, d)`` array of independent replicas for ``config.n_steps`` steps."""
    x = np.array(x0, dtype=np.float64, ndmin=2)
    for _ in range(config.n_steps):
        x = em_step(x, potential, config, rng.standard_normal(x.shape))
    return x


def simulate_burst(x0, potential: Potential, config: SdeConfig, n_replicas: int, index: int = 0) -> BurstEnsemble:
    """``n_replicas`` endpoints of the time-``tau`` law started at ``x0``.

    The noise stream is a pure function of ``(config.seed, index)``; replica ``j``
    always consumes column ``j`` of each step's draw.
    """
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    rng = burst_rng(config.seed, index)
    start = np.repeat(x0[None, :], n_replicas, axis=0)
    try:
        end = simulate_paths(start, potential, config, rng)
    except IntegrationError as exc:
        exc.replica = index
        raise
    return BurstEnsemble(x0, end, config.tau, config)


# -- stationary law -------------------------------------------------------------------------

def _box_grid(box, nodes):
    axes = [np.linspace(lo, hi, nodes) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack(mesh, axis=-1)


class GibbsDensity:
    """``exp(-beta V) / Z`` with ``Z`` from tensor trapezoid quadrature on the domain box."""

    def __init__(self, potential: Potential, beta: float, nodes: int = 801):
        self.potential = potential
        self.beta = float(beta)
        axes, pts = _box_grid(potential.domain_box, nodes)
        v = self.beta * potential.value(pts)
        self._shift = float(np.min(v))
        w = np.exp(-(v - self._shift))
        for ax in axes[::-1]:
            w = trapezoid(w, ax, axis=-1)
        self.log_z = float(np.log(w)) - self._shift
        self.extrapolated = False

    def log_density(self, x):
        return -self.beta * self.potential.value(x) - self.log_z

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        box = self.potential.domain_box
        outside = np.any((x < box[:, 0]) | (x > box[:, 1]), axis=-1)
        if np.any(outside):
            self.extrapolated = True
        return np.exp(self.log_density(x))

    def integral(self, nodes: int = 401) -> float:
        axes, pts = _box_grid(self.potential.domain_box, nodes)
        w = self(pts)
        for ax in axes[::-1]:
            w = trapezoid(w, ax, axis=-1)
        return float(w)


def gibbs_density(potential: Potential, beta: float, x):
    return GibbsDensity(potential, beta)(x)


@dataclass
class MetropolisResult:
    samples: np.ndarray
    step: float
    acceptance: float
    thin: int


def _metropolis_chains(logp, x, step, n, rng):
    """Advance the ``(K, d)`` chain states ``n`` steps; returns ``(trace (n, K, d), acceptance, x)``."""
    lp = logp(x)
    out = np.empty((n,) + x.shape)
    acc = 0
    for i in range(n):
        y = x + step * rng.standard_normal(x.shape)
        ly = logp(y)
        ok = np.log(rng.random(len(x))) < ly - lp
        x = np.where(ok[:, None], y, x)
        lp = np.where(ok, ly, lp)
        acc += int(ok.sum())
        out[i] = x
    return out, acc / (n * len(x)), x


def _autocorr(series, lag):
    """Lag autocorrelation of ``series`` of shape ``(T, K)``, pooled over the ``K`` chains."""
    s = series - series.mean(axis=0)
    var = float(np.sum(s * s))
    if var == 0:
        return 0.0
    return float(np.sum(s[:-lag] * s[lag:]) / var)


def sample_stationary(potential: Potential, beta: float, n_samples: int, seed, x0=None,
                      burn_in: int = 10_000, max_thin: int = 200, n_chains: int = 64) -> MetropolisResult:
    """Random-walk Metropolis targeting ``exp(-beta V)`` restricted to the domain box.

    ``n_chains`` independent chains run side by side.  The proposal scale is
    tuned to 20-40% acceptance, each chain is burnt in for ``burn_in`` steps,
    then thinned until the lag-one autocorrelation of the kept samples is
    below 0.1 for ``V`` and for every coordinate (the coordinates matter when
    ``V`` is flat).  Kept samples are interleaved across chains.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    box = potential.domain_box
    dim = len(box)
    k = int(min(n_chains, n_samples))

    def logp(y):
        inside = np.all((y >= box[:, 0]) & (y <= box[:, 1]), axis=1)
        return np.where(inside, -beta * potential.value(y), -np.inf)

    if x0 is None:
        x = rng.uniform(box[:, 0], box[:, 1], size=(k, dim))
    else:
        x = np.repeat(np.asarray(x0, dtype=float).reshape(1, dim), k, axis=0)
    step = 0.25 * float(np.min(box[:, 1] - box[:, 0]))
    _, _, x = _metropolis_chains(logp, x, step, 200, rng)
    acc = 0.0
    for _ in range(40):
        _, acc, x = _metropolis_chains(logp, x, step, 200, rng)
        if 0.2 <= acc <= 0.4:
            break
        step *= np.exp(2.0 * (acc - 0.3))
    if not 0.05 <= acc <= 0.8:
        raise SamplerConfigError(f"proposal tuning failed: acceptance {acc:.3f} at step {step:.3g}")
    _, _, x = _metropolis_chains(logp, x, step, burn_in, rng)
    pilot, _, x = _metropolis_chains(logp, x, step, 4 * max_thin, rng)
    series = np.concatenate([potential.value(pilot)[..., None], pilot], axis=-1)
    thin = 1
    while thin < max_thin and max(abs(_autocorr(series[::thin, :, j], 1)) for j in range(dim + 1)) >= 0.1:
        thin += 1
    if thin == max_thin:
        log.warning("thinning reached max_thin=%d before autocorrelation fell below 0.1", max_thin)
    per_chain = -(-n_samples // k)
    chain, acc, _ = _metropolis_chains(logp, x, step, per_chain * thin, rng)
    kept = chain[thin - 1::thin].reshape(-1, dim)[:n_samples]
    return MetropolisResult(kept, step, acc, thin)


# -- serialization ---------------------------------------------------------------------------

def burst_to_csv(burst: BurstEnsemble, path) -> None:
    """Header ``x0_1,...,x0_n,tau,seed`` with its values, then one endpoint per row."""
    d = burst.start.size
    header = ",".join([f"x0_{i + 1}" for i in range(d)] + ["tau", "seed"])
    first = ",".join([repr(float(v)) for v in burst.start] + [repr(float(burst.tau)), str(burst.meta.seed)])
    with open(path, "w") as fh:
        fh.write(header + "\n" + first + "\n")
        for row in burst.endpoints:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def burst_from_csv(path, config: SdeConfig | None = None) -> BurstEnsemble:
    with open(path) as fh:
        fh.readline()
        first = [float(v) for v in fh.readline().split(",")]
        ends = np.loadtxt(fh, delimiter=",", ndmin=2)
    start, tau, seed = np.array(first[:-2]), first[-2], int(first[-1])
    if config is None:
        config = SdeConfig(tau=tau, dt=tau, seed=seed)
    return BurstEnsemble(start, ends, tau, config)
