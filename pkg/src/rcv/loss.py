"""Monte Carlo estimates of the differential and constructive loss functionals.

The level-set samples ``y ~ mu_z`` are drawn once per estimate from
``quad.seed`` and shared by every outer start point, so the integrand ``f`` is
a deterministic function of ``x`` and its variance over ``mu`` is exactly the
Monte Carlo error prefactor of the outer average.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .coordinates import LevelSetSample, ReactionCoordinate, sample_level_set
from .kde import GridSpec, kde_fit, l1_distance
from .oracle import DiscreteChain
from .torus import TWO_PI, TorusKernelSpec, torus_grid

log = logging.getLogger(__name__)

LEVEL_WEIGHTINGS = ("normalized", "coarea")
CSV_COLUMNS = ["rc_id", "param", "sigma", "tau", "M", "loss", "std_error", "var_f", "rel_var_f", "seed"]


class InsufficientSamplesError(ValueError):
    pass


class LevelSetFailure(RuntimeError):
    def __init__(self, z, cause):
        super().__init__(f"level-set sampling failed at z={z:.6g}: {cause}")
        self.z = z


@dataclass(frozen=True)
class LossQuadConfig:
    """Discretisation of the loss integrals.

    ``level_weighting='normalized'`` gives every level of the ``z``-grid equal
    weight (probability-normalised ``mu_z``); ``'coarea'`` weights level ``z``
    by the squared level mass, i.e. keeps ``mu_z`` unnormalised.
    """

    n_z: int = 21
    n_level: int = 256
    m_outer: int = 256
    n_pairs: int = 256
    seed: int = 0
    level_weighting: str = "normalized"
    l1_nodes: int = 128

    def __post_init__(self):
        for name in ("n_z", "n_level", "m_outer", "n_pairs", "l1_nodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_level < 2:
            raise ValueError("n_level must be >= 2 to form pairs")
        if self.n_pairs > self.n_level * (self.n_level - 1) // 2:
            raise ValueError("n_pairs exceeds the number of distinct pairs n_level*(n_level-1)/2")
        if self.level_weighting not in LEVEL_WEIGHTINGS:
            raise ValueError(f"level_weighting must be one of {LEVEL_WEIGHTINGS}")


@dataclass
class LossEstimate:
    value: float
    std_error: float
    m: int
    per_sample_f: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


# -- transition access ------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionAccess:
    """Uniform view of ``p(x, .)`` and ``p(x, y) / pi(y)``.

    ``ratio_rows(xs, ys, index)`` returns ``p(x_m, y) / pi(y)`` for every start
    point ``x_m`` and every ``y`` in ``ys`` (shape ``(M, *ys.shape[:-1])``);
    ``index`` offsets the per-start-point random streams of empirical modes.
    ``l1_rows(xa, xb, index)`` returns ``||p(xa_m, .) - p(xb_m, .)||_1``.
    """

    mode: str
    dim: int
    ratio_rows: Callable
    l1_rows: Callable
    stationary_density: Callable
    forward: Callable
    pair_levels: Optional[Callable] = None
    info: dict = field(default_factory=dict)

    def ratio(self, x, y):
        return self.ratio_rows(np.atleast_2d(x), np.asarray(y, dtype=float))[0]


def torus_access(spec: TorusKernelSpec, l1_nodes: int = 128) -> TransitionAccess:
    """Analytic kernel of the torus process; ``pi`` is uniform."""
    vol = spec.volume

    def ratio_rows(xs, ys, index=0):
        xs = np.asarray(xs, dtype=float)
        return spec.density(xs.reshape((-1,) + (1,) * (ys.ndim - 1) + (spec.n,)), ys[None]) * vol

    def pair_levels(xs, y1, y2, index=0):
        xs = np.ascontiguousarray(xs, dtype=float)
        return np.column_stack([spec.pair_integrand(xs, y1[l:l + 1], y2[l:l + 1], vol)
                                for l in range(y1.shape[0])])

    def l1_rows(xa, xb, index=0):
        if spec.n > 3:
            raise ValueError("grid L1 distances support n <= 3")
        h = (TWO_PI / l1_nodes) ** spec.n
        return np.array([np.abs(spec.forward_grid(a, l1_nodes) - spec.forward_grid(b, l1_nodes)).sum() * h
                         for a, b in zip(np.atleast_2d(xa), np.atleast_2d(xb))])

    return TransitionAccess("analytic-torus", spec.n, ratio_rows, l1_rows, spec.stationary_density,
                            lambda x, index=0: (lambda y: spec.density(x, y)), pair_levels,
                            {"n": spec.n, "tau": spec.tau, "sigma": spec.sigma})


def cell_access(chain: DiscreteChain) -> TransitionAccess:
    """Piecewise-constant kernel of a chain carrying torus cell geometry.

    ``p(x, y) = P[c(x), c(y)] / vol`` and ``pi(y) = pi[c(y)] / vol``, so the
    continuous losses of this kernel equal the chain's exact sums whenever the
    level sets are unions of whole cells.
    """
    geom = chain.cell_geometry
    if geom is None:
        raise ValueError("tabulated-cells access needs a chain with cell geometry")
    ratio = chain.P / chain.pi[None, :]

    def ratio_rows(xs, ys, index=0):
        return ratio[np.ix_(geom.cell_index(xs), geom.cell_index(ys).ravel())].reshape((len(xs),) + ys.shape[:-1])

    def l1_rows(xa, xb, index=0):
        return np.abs(chain.P[geom.cell_index(xa)] - chain.P[geom.cell_index(xb)]).sum(axis=1)

    def stationary(y):
        return chain.pi[geom.cell_index(y)] / geom.cell_volume

    def forward(x, index=0):
        row = chain.P[geom.cell_index(np.asarray(x, dtype=float))]
        return lambda y: row[geom.cell_index(y)] / geom.cell_volume

    return TransitionAccess("tabulated-cells", geom.n, ratio_rows, l1_rows, stationary, forward,
                            info={"k": geom.k, "n": geom.n})


class SmoothedDensity:
    """``pi`` convolved with a Gaussian product kernel, tabulated on a grid over ``box``."""

    def __init__(self, density, box, nodes: int = 512):
        self.box = np.asarray(box, dtype=float)
        self.axes = [lo + (hi - lo) * (np.arange(nodes) + 0.5) / nodes for lo, hi in self.box]
        self.step = (self.box[:, 1] - self.box[:, 0]) / nodes
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.table = density(np.stack([m.ravel() for m in mesh], axis=1)).reshape(mesh[0].shape)

    def convolved(self, bandwidth):
        from scipy.interpolate import RegularGridInterpolator
        from scipy.ndimage import gaussian_filter

        sm = gaussian_filter(self.table, np.asarray(bandwidth) / self.step, mode="constant", truncate=6.0)
        return RegularGridInterpolator(self.axes, sm, bounds_error=False, fill_value=0.0)


def kde_access(potential, config, n_replicas: int, stationary_density, bandwidth=None,
               pi_floor: float = 1e-12, grid_nodes: int = 128, burst_offset: int = 0,
               denominator: str = "exact", smoothing_nodes: int = 512) -> TransitionAccess:
    """Empirical kernel: a burst of ``n_replicas`` endpoints per start point, smoothed by a KDE.

    The burst for start point ``m`` of a call with stream ``index`` uses the
    random stream ``(config.seed, burst_offset + index + m)``.

    ``denominator='exact'`` divides the KDE by ``pi``; ``'smoothed'`` divides by
    ``pi`` convolved with the same kernel as the KDE, so that the smoothing bias
    of numerator and denominator cancel where ``p(x, .)`` is locally
    proportional to ``pi``.
    """
    from .sde import simulate_burst

    if denominator not in ("exact", "smoothed"):
        raise ValueError("denominator must be 'exact' or 'smoothed'")
    grid = GridSpec(np.asarray(potential.domain_box, dtype=float), grid_nodes)
    smooth = SmoothedDensity(stationary_density, potential.domain_box, smoothing_nodes) \
        if denominator == "smoothed" else None

    def fit(x, i):
        return kde_fit(simulate_burst(x, potential, config, n_replicas, index=burst_offset + i), bandwidth)

    def ratio_rows(xs, ys, index=0):
        flat = ys.reshape(-1, ys.shape[-1])
        if smooth is None:
            pi = np.maximum(stationary_density(flat), pi_floor)
        out = np.empty((len(xs), flat.shape[0]))
        for m, x in enumerate(np.atleast_2d(xs)):
            kde = fit(x, index + m)
            if smooth is not None:
                pi = np.maximum(smooth.convolved(kde.bandwidth)(flat), pi_floor)
            out[m] = kde(flat) / pi
        return out.reshape((len(xs),) + ys.shape[:-1])

    def l1_rows(xa, xb, index=0):
        xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
        out = np.empty(len(xa))
        for m in range(len(xa)):
            a = fit(xa[m], index + 2 * m)
            b = fit(xb[m], index + 2 * m + 1)
            out[m] = l1_distance(a, b, grid)
        return out

    return TransitionAccess("empirical-kde", potential.dim, ratio_rows, l1_rows, stationary_density,
                            lambda x, index=0: fit(x, index),
                            info={"n_replicas": n_replicas, "tau": config.tau, "beta": config.beta,
                                  "potential": potential.name, "denominator": denominator})


def equilibrated_access(stationary_density, dim: int) -> TransitionAccess:
    """The kernel ``p(x, y) = pi(y)``: one step reaches equilibrium."""

    def ratio_rows(xs, ys, index=0):
        return np.ones((len(xs),) + ys.shape[:-1])

    return TransitionAccess("analytic-equilibrated", dim, ratio_rows,
                            lambda xa, xb, index=0: np.zeros(len(np.atleast_2d(xa))),
                            stationary_density, lambda x, index=0: stationary_density)


# -- level-set pairs --------------------------------------------------------------------------

@dataclass
class LevelPairs:
    """Shared inner samples: pools ``(L, n_level, d)``, pair indices ``(L, P)``, level weights ``(L,)``.

    ``masses`` holds the level masses reported by the sampler (nan when unknown).
    """

    z: np.ndarray
    pools: np.ndarray
    first: np.ndarray
    second: np.ndarray
    weights: np.ndarray
    masses: Optional[np.ndarray] = None

    def weights_for(self, weighting: str) -> np.ndarray:
        """Level weights under either convention, from the same pools."""
        if weighting == "normalized":
            return np.ones(len(self.z))
        if weighting == "coarea":
            m = np.asarray(self.masses, dtype=float)
            if self.masses is None or np.any(~np.isfinite(m)):
                raise ValueError("level masses unknown; coarea weighting unavailable")
            return m ** 2
        raise ValueError(f"level_weighting must be one of {LEVEL_WEIGHTINGS}")

    @property
    def y1(self):
        return np.take_along_axis(self.pools, self.first[..., None], axis=1)

    @property
    def y2(self):
        return np.take_along_axis(self.pools, self.second[..., None], axis=1)


def level_pairs(rc: ReactionCoordinate, stationary_density, quad: LossQuadConfig) -> LevelPairs:
    """Draw the level-set pools and the independent distinct-index pairs for every level."""
    zs = rc.levels(quad.n_z)
    seeds = np.random.SeedSequence([quad.seed, 0x1E7E1]).spawn(quad.n_z + 1)
    pools, masses = [], []
    for z, s in zip(zs, seeds[:-1]):
        try:
            sample: LevelSetSample = sample_level_set(rc, float(z), quad.n_level, s, stationary_density)
        except Exception as exc:
            raise LevelSetFailure(float(z), exc) from exc
        pools.append(sample.points)
        masses.append(np.nan if sample.mass is None else sample.mass)
    rng = np.random.default_rng(seeds[-1])
    first = rng.integers(0, quad.n_level, (quad.n_z, quad.n_pairs))
    second = (first + 1 + rng.integers(0, quad.n_level - 1, first.shape)) % quad.n_level
    masses = np.asarray(masses, dtype=float)
    if quad.level_weighting == "coarea" and np.any(~np.isfinite(masses)):
        raise ValueError(f"coordinate {rc.name!r} does not report level masses; coarea weighting unavailable")
    out = LevelPairs(zs, np.stack(pools), first, second, np.ones(quad.n_z), masses)
    out.weights = out.weights_for(quad.level_weighting)
    return out


def _per_level_pair_means(xs, pairs: LevelPairs, access: TransitionAccess, index: int = 0):
    """``(M, L)`` array of mean pairwise ratio differences per level, and the per-level
    mean absolute deviation from the level mean (the constructive counterpart)."""
    ratios = access.ratio_rows(xs, pairs.pools, index)          # (M, L, n_level)
    r1 = np.take_along_axis(ratios, np.broadcast_to(pairs.first, (len(xs),) + pairs.first.shape), axis=2)
    r2 = np.take_along_axis(ratios, np.broadcast_to(pairs.second, (len(xs),) + pairs.second.shape), axis=2)
    diff = np.abs(r1 - r2).mean(axis=2)
    dev = np.abs(ratios - ratios.mean(axis=2, keepdims=True)).mean(axis=2)
    return diff, dev


def level_values(xs, pairs: LevelPairs, access: TransitionAccess, constructive=False, index=0, chunk=256):
    """Per-level integrand contributions, shape ``(M, L)``; ``f`` is their weighted level average.

    With ``constructive`` a second array holds the per-level mean deviations from the level mean.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    L = len(pairs.z)
    diff = np.empty((len(xs), L))
    dev = np.empty((len(xs), L)) if constructive else None
    for s in range(0, len(xs), chunk):
        blk = xs[s:s + chunk]
        if access.pair_levels is not None and not constructive:
            diff[s:s + chunk] = access.pair_levels(blk, pairs.y1, pairs.y2, index + s)
        else:
            d, v = _per_level_pair_means(blk, pairs, access, index + s)
            diff[s:s + chunk] = d
            if constructive:
                dev[s:s + chunk] = v
    return (diff, dev) if constructive else diff


def _f_batch(xs, pairs: LevelPairs, access: TransitionAccess, constructive=False, index=0, chunk=256):
    w = pairs.weights / len(pairs.weights)
    if constructive:
        diff, dev = level_values(xs, pairs, access, True, index, chunk)
        return diff @ w, dev @ w
    return level_values(xs, pairs, access, False, index, chunk) @ w


def integrand_f(x, rc: ReactionCoordinate, access: TransitionAccess, quad: LossQuadConfig,
                pairs: Optional[LevelPairs] = None) -> float:
    """``f(x)``: level-averaged mean of ``|p(x,y1)/pi(y1) - p(x,y2)/pi(y2)|`` over ``mu_z`` pairs."""
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    return float(_f_batch(np.atleast_2d(x), pairs, access)[0])


def _estimate(values, meta) -> LossEstimate:
    m = len(values)
    se = float(values.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return LossEstimate(float(values.mean()), se, m, values, meta)


def loss_deflat(rc: ReactionCoordinate, access: TransitionAccess, stationary_sampler: Callable,
                quad: LossQuadConfig, pairs: Optional[LevelPairs] = None) -> LossEstimate:
    """Differential deflatability loss: the mean of ``f`` over ``m_outer`` draws ``x ~ mu``.

    ``stationary_sampler(m, seed)`` returns an ``(m, d)`` array.
    """
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    xs = stationary_sampler(quad.m_outer, np.random.SeedSequence([quad.seed, 0x0C7E2]))
    f = _f_batch(xs, pairs, access)
    return _estimate(f, {"rc": rc.name, "kind": "deflat_diff", "weighting": quad.level_weighting})


def loss_deflat_both(rc: ReactionCoordinate, access: TransitionAccess, stationary_sampler: Callable,
                     quad: LossQuadConfig, pairs: Optional[LevelPairs] = None) -> dict:
    """:func:`loss_deflat` under both level weightings from one set of samples.

    Returns a mapping ``weighting -> LossEstimate``; the one named by
    ``quad.level_weighting`` equals :func:`loss_deflat`.  Coarea is omitted
    when the coordinate reports no level masses.
    """
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    xs = stationary_sampler(quad.m_outer, np.random.SeedSequence([quad.seed, 0x0C7E2]))
    per_level = level_values(xs, pairs, access)
    out = {}
    for wname in LEVEL_WEIGHTINGS:
        try:
            w = pairs.weights_for(wname)
        except ValueError:
            continue
        out[wname] = _estimate(per_level @ (w / len(w)), {"rc": rc.name, "kind": "deflat_diff", "weighting": wname})
    return out


def loss_deflat_constructive(rc, access, stationary_sampler, quad, pairs=None):
    """Deflatability loss at the conditional-mean ``p_D(x, z) = E_{mu_z}[p(x, .)/pi]``.

    Returns ``(constructive, differential)`` estimates computed from the same samples.
    """
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    xs = stationary_sampler(quad.m_outer, np.random.SeedSequence([quad.seed, 0x0C7E2]))
    f, g = _f_batch(xs, pairs, access, constructive=True)
    meta = {"rc": rc.name, "weighting": quad.level_weighting}
    return _estimate(g, dict(meta, kind="deflat_constructive")), _estimate(f, dict(meta, kind="deflat_diff"))


def loss_lump_differential(rc: ReactionCoordinate, access: TransitionAccess, quad: LossQuadConfig,
                           pairs: Optional[LevelPairs] = None) -> LossEstimate:
    """Differential lumpability loss: level-averaged mean ``L1`` distance of ``p(x1, .)``, ``p(x2, .)``
    over ``mu_z`` pairs.  The standard error treats levels as strata."""
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    L, P = pairs.first.shape
    d = np.empty((L, P))
    for l in range(L):
        d[l] = access.l1_rows(pairs.y1[l], pairs.y2[l], index=2 * l * P)
    w = pairs.weights / L
    value = float(w @ d.mean(axis=1))
    var = float(np.sum(w ** 2 * d.var(axis=1, ddof=1) / P)) if P > 1 else float("nan")
    return LossEstimate(value, np.sqrt(var), L * P, None,
                        {"rc": rc.name, "kind": "lump_diff", "weighting": quad.level_weighting})


def loss_lump_constructive(rc: ReactionCoordinate, access: TransitionAccess, quad: LossQuadConfig,
                           pairs: Optional[LevelPairs] = None) -> LossEstimate:
    """Lumpability loss at the conditional mean ``p_L(z, .) = E_{mu_z}[p(x', .)]``.

    Per level, ``p_L`` is the average of the forward densities of the level's
    pool and the loss averages ``||p(x, .) - p_L(z, .)||_1`` over the same pool.
    """
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    L, n_level = pairs.pools.shape[:2]
    d = np.empty((L, n_level))
    if access.mode == "tabulated-cells":
        geom_rows = access.info
        for l in range(L):
            rows = np.stack([access.forward(x)(_cell_centers(geom_rows)) for x in pairs.pools[l]])
            d[l] = np.abs(rows - rows.mean(axis=0)).sum(axis=1) * (TWO_PI / geom_rows["k"]) ** geom_rows["n"]
    elif access.mode == "analytic-torus":
        nodes = quad.l1_nodes
        h = (TWO_PI / nodes) ** access.dim
        spec = TorusKernelSpec(access.info["n"], access.info["tau"], access.info["sigma"])
        for l in range(L):
            tabs = np.stack([spec.forward_grid(x, nodes).ravel() for x in pairs.pools[l]])
            d[l] = np.abs(tabs - tabs.mean(axis=0)).sum(axis=1) * h
    else:
        raise NotImplementedError(f"constructive lumpability loss is not available in {access.mode!r} mode")
    w = pairs.weights / L
    value = float(w @ d.mean(axis=1))
    var = float(np.sum(w ** 2 * d.var(axis=1, ddof=1) / n_level))
    return LossEstimate(value, np.sqrt(var), L * n_level, None,
                        {"rc": rc.name, "kind": "lump_constructive", "weighting": quad.level_weighting})


def _cell_centers(info):
    c = -np.pi + (TWO_PI / info["k"]) * (np.arange(info["k"]) + 0.5)
    mesh = np.meshgrid(*([c] * info["n"]), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# -- variance and MC error ----------------------------------------------------------------

def variance_of_f(estimate: LossEstimate):
    """``(Var[f], Var[f] / E[f])`` from the retained per-sample values."""
    f = estimate.per_sample_f
    if f is None or len(f) < 2:
        raise InsufficientSamplesError("variance needs at least two retained f values")
    var = float(np.var(f, ddof=1))
    mean = float(np.mean(f))
    return var, (var / mean if mean != 0 else (0.0 if var == 0 else float("inf")))


@dataclass
class McErrorCurve:
    m_list: np.ndarray
    rel_error: np.ndarray          # mean over trials of |I - I_M| / I
    trial_errors: np.ndarray       # (n_trials, len(m_list))
    reference: float
    reference_std_error: float
    var_f: float
    meta: dict = field(default_factory=dict)

    @property
    def var_over_sqrt_m(self):
        return self.var_f / np.sqrt(self.m_list)

    @property
    def std_over_sqrt_m(self):
        return np.sqrt(self.var_f) / np.sqrt(self.m_list)

    def slope(self) -> float:
        return float(np.polyfit(np.log(self.m_list), np.log(self.rel_error), 1)[0])


def mc_error_curve(rc: ReactionCoordinate, access: TransitionAccess, stationary_sampler: Callable,
                   m_list: Sequence[int], n_trials: int, seed: int, quad: Optional[LossQuadConfig] = None,
                   ref_factor: int = 100, pairs: Optional[LevelPairs] = None,
                   reference_points: Optional[np.ndarray] = None) -> McErrorCurve:
    """Relative expected outer-MC error ``E|I(f) - I_M(f)| / I(f)`` for each ``M``.

    ``I(f)`` is approximated from ``ref_factor * max(m_list)`` fresh draws, or
    as the plain average over ``reference_points`` when given (a quadrature grid
    for a uniform stationary law); each trial then draws its own fresh start points.  Start points depend only on
    ``(seed, trial, M)``, so curves for different kernels are paired.
    """
    quad = replace(quad or LossQuadConfig(), seed=seed)
    m_list = np.asarray(sorted(m_list), dtype=int)
    pairs = pairs or level_pairs(rc, access.stationary_density, quad)
    if reference_points is None:
        reference_points = stationary_sampler(ref_factor * int(m_list.max()), np.random.SeedSequence([seed, 0xEEF]))
    m_ref = len(reference_points)
    f_ref = _f_batch(reference_points, pairs, access)
    ref = float(f_ref.mean())
    if ref == 0.0:
        raise ValueError("reference integral is zero; the relative error is undefined")
    errs = np.empty((n_trials, m_list.size))
    offset = m_ref
    for t in range(n_trials):
        for j, m in enumerate(m_list):
            xs = stationary_sampler(int(m), np.random.SeedSequence([seed, 0x7A1, t, int(m)]))
            errs[t, j] = abs(_f_batch(xs, pairs, access, index=offset).mean() - ref) / ref
            offset += int(m)
    return McErrorCurve(m_list, errs.mean(axis=0), errs, ref, float(f_ref.std(ddof=1) / np.sqrt(m_ref)),
                        float(f_ref.var(ddof=1)), {"rc": rc.name, "m_ref": m_ref, "n_trials": n_trials})


def torus_midpoint_grid(n: int, nodes: int) -> np.ndarray:
    """``nodes**n`` cell midpoints of ``[-pi, pi)^n``, a reference quadrature for the uniform law."""
    ax = -np.pi + TWO_PI * (np.arange(nodes) + 0.5) / nodes
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def uniform_torus_sampler(n: int):
    """``stationary_sampler`` for the uniform law on ``[-pi, pi)^n``."""

    def sample(m, seed):
        return np.random.default_rng(seed).uniform(-np.pi, np.pi, (m, n))

    return sample


# -- CSV ------------------------------------------------------------------------------------

def loss_row(rc_id, param, sigma, tau, estimate: LossEstimate, seed) -> dict:
    if estimate.per_sample_f is not None and estimate.m >= 2:
        var, rel = variance_of_f(estimate)
    else:
        var = rel = float("nan")
    return {"rc_id": rc_id, "param": param, "sigma": sigma, "tau": tau, "M": estimate.m,
            "loss": estimate.value, "std_error": estimate.std_error, "var_f": var, "rel_var_f": rel,
            "seed": seed}


def write_loss_csv(path, rows, extra_columns: Sequence[str] = ()) -> None:
    cols = CSV_COLUMNS + list(extra_columns)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in cols})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
