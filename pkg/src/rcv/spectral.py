"""Ulam discretisation of the transfer operator and analysis of its leading spectrum."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sde import Potential, SdeConfig, burst_rng, simulate_paths

log = logging.getLogger(__name__)


class EscapeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class UlamGrid:
    box: np.ndarray
    k: int

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def n_cells(self) -> int:
        return self.k ** self.dim

    @property
    def widths(self) -> np.ndarray:
        return (self.box[:, 1] - self.box[:, 0]) / self.k

    def centers(self) -> np.ndarray:
        axes = [lo + w * (np.arange(self.k) + 0.5) for (lo, _), w in zip(self.box, self.widths)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def locate(self, x, periodic: bool = False):
        """Flat cell index per row of ``x`` and a mask of rows inside the box."""
        x = np.asarray(x, dtype=np.float64)
        rel = (x - self.box[:, 0]) / self.widths
        if periodic:
            rel = np.mod(rel, self.k)
        idx = np.floor(rel).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.k), axis=1)
        idx = np.clip(idx, 0, self.k - 1)
        return np.ravel_multi_index(tuple(idx.T), (self.k,) * self.dim), inside


@dataclass
class UlamModel:
    grid: UlamGrid
    counts: np.ndarray
    matrix: np.ndarray
    stationary_weights: np.ndarray
    active: np.ndarray
    lag: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, P, weights, lag: float = 1.0):
        """Wrap a given row-stochastic matrix (e.g. an oracle chain) as a fully active model."""
        P = np.asarray(P, dtype=float)
        n = P.shape[0]
        grid = UlamGrid(np.array([[0.0, float(n)]]), n)
        return cls(grid, P.copy(), P.copy(), np.asarray(weights, dtype=float), np.ones(n, bool), lag)


def ulam_estimate(potential: Potential, config: SdeConfig, grid_k: int, samples_per_cell: int, seed,
                  stationary_density=None, mass_floor: float = 1e-9, periodic: bool = False) -> UlamModel:
    """Count transitions between the cells of a ``grid_k``-per-axis partition of the domain box.

    Start points are uniform in each cell and carry importance weights
    ``pi(x) / mean_cell(pi)``; cells whose estimated mass is below
    ``mass_floor`` (relative to the total) are excluded.  Endpoints leaving the
    box or landing in excluded cells are dropped and their rows renormalised.
    With ``periodic`` the box is treated as a torus.
    """
    if grid_k < 4:
        raise ValueError("grid_k must be >= 4")
    if samples_per_cell < 10:
        raise ValueError("samples_per_cell must be >= 10")
    grid = UlamGrid(np.asarray(potential.domain_box, dtype=float), grid_k)
    if stationary_density is None:
        from .sde import GibbsDensity
        stationary_density = GibbsDensity(potential, config.beta)
    rng = burst_rng(seed, 0x01A)
    nc, d = grid.n_cells, grid.dim
    lo = grid.centers() - 0.5 * grid.widths
    starts = lo[:, None, :] + rng.random((nc, samples_per_cell, d)) * grid.widths
    pi0 = stationary_density(starts.reshape(-1, d)).reshape(nc, samples_per_cell)
    cell_mass = pi0.mean(axis=1) * np.prod(grid.widths)
    active = cell_mass > mass_floor * cell_mass.sum()
    w = np.zeros_like(pi0)
    w[active] = pi0[active] / pi0[active].mean(axis=1, keepdims=True)
    idx = np.flatnonzero(active)
    x0 = starts[active].reshape(-1, d)
    sim_cfg = SdeConfig(config.beta, config.dt, config.tau, config.seed, config.substep_threshold, config.substeps)
    end = simulate_paths(x0, potential, sim_cfg, burst_rng(seed, 0x01B))
    dest, inside = grid.locate(end, periodic)
    src = np.repeat(idx, samples_per_cell)
    wt = w[active].ravel()
    keep = inside & active[dest]
    escaped = float(wt[~keep].sum() / wt.sum())
    if escaped > 0:
        warnings.warn(f"{escaped:.2%} of the endpoint weight left the active region and was dropped",
                      EscapeWarning, stacklevel=2)
    pos = -np.ones(nc, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    counts = np.zeros((idx.size, idx.size))
    np.add.at(counts, (pos[src[keep]], pos[dest[keep]]), wt[keep])
    rows = counts.sum(axis=1)
    empty = rows == 0
    if np.any(empty):
        # a cell whose every endpoint escaped keeps its mass in place
        counts[empty, np.flatnonzero(empty)] = 1.0
        rows = counts.sum(axis=1)
    matrix = counts / rows[:, None]
    weights = cell_mass[active] / cell_mass[active].sum()
    return UlamModel(grid, counts, matrix, weights, active, config.tau,
                     {"escaped_fraction": escaped, "n_active": int(idx.size), "samples_per_cell": samples_per_cell})


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray       # (n_active, k)
    lag: float

    @property
    def implied_rates(self) -> np.ndarray:
        lam = self.eigenvalues
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where((lam > 0) & (lam < 1), -np.log(np.clip(lam, 1e-300, None)) / self.lag,
                            np.where(lam >= 1, 0.0, np.nan))


def reversibilize(matrix, weights):
    """Symmetrise the flux ``diag(w) P``; returns the reversible matrix and its stationary law.

    The returned law ``d`` makes ``D^{1/2} P D^{-1/2}`` exactly symmetric, so
    the spectrum is real with leading eigenvalue 1.
    """
    flux = np.asarray(weights, dtype=float)[:, None] * np.asarray(matrix, dtype=float)
    flux = 0.5 * (flux + flux.T)
    d = flux.sum(axis=1)
    return flux / d[:, None], d / d.sum()


def leading_spectrum(model: UlamModel, k_eigs: int) -> Spectrum:
    """Top ``k_eigs`` eigenpairs of the reversibilised matrix, via the symmetric ``D^{1/2} P D^{-1/2}``.

    Eigenvectors are returned in the original (right-eigenvector) scaling
    ``D^{-1/2} u``, normalised in ``L2(D)``.
    """
    n = model.matrix.shape[0]
    if not 1 <= k_eigs <= n:
        raise ValueError(f"k_eigs={k_eigs} must lie in [1, {n}]")
    P, d = reversibilize(model.matrix, model.stationary_weights)
    s = np.sqrt(d)
    S = s[:, None] * P / s[None, :]
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(vals)[::-1][:k_eigs]
    vals = vals[order]
    vecs = vecs[:, order] / s[:, None]
    vecs /= np.sqrt((d[:, None] * vecs ** 2).sum(axis=0))
    vecs *= np.where(vecs.sum(axis=0) < 0, -1.0, 1.0)
    return Spectrum(vals, vecs, model.lag)


@dataclass
class GapReport:
    implied_rate_ratios: np.ndarray   # log(l_i)/log(l_{i+1}), nan where undefined
    raw_differences: np.ndarray       # l_i - l_{i+1}
    gap_ratios: np.ndarray            # (1 - l_i)/(1 - l_{i+1})
    largest_gap: int
    skipped: list


def gap_report(spectrum: Spectrum) -> GapReport:
    """Gap diagnostics between consecutive eigenvalues; the largest raw drop is flagged."""
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    if lam.size < 2:
        raise ValueError("gap_report needs at least two eigenvalues")
    skipped = [i for i, v in enumerate(lam) if v <= 0]
    a, b = lam[:-1], lam[1:]
    ok = (a > 0) & (a < 1) & (b > 0) & (b < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(ok, np.log(np.where(ok, a, 0.5)) / np.log(np.where(ok, b, 0.5)), np.nan)
        gaps = np.where(b < 1, (1.0 - a) / (1.0 - b), np.nan)
    diff = a - b
    return GapReport(rates, diff, gaps, int(np.argmax(diff)), skipped)


def cluster_gap_statistic(spectrum: Spectrum, cluster: int = 5) -> float:
    """Largest implied rate inside the leading ``cluster`` over the rate gap that follows it.

    ``r_{K-1} / (r_K - r_{K-1})`` with ``r_i = -log(l_i) / lag`` and ``K = cluster``;
    small values mean the cluster is well separated from the next process.
    """
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    if lam.size <= cluster:
        raise ValueError(f"need more than {cluster} eigenvalues")
    a, b = lam[cluster - 1], lam[cluster]
    if b <= 0:
        return 0.0
    ra = -np.log(min(a, 1.0)) / spectrum.lag
    rb = -np.log(b) / spectrum.lag
    if rb <= ra:
        return float("inf")
    return float(ra / (rb - ra))


def implied_rate_ratio(spectrum: Spectrum, cluster: int = 5) -> float:
    """``log l_{K-1} / log l_K``: the slowest excluded rate relative to the fastest included one, inverted."""
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    a, b = lam[cluster - 1], lam[cluster]
    if not (0 < a < 1 and 0 < b < 1):
        return float("nan")
    return float(np.log(a) / np.log(b))


def spectrum_to_csv(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "implied_rate"])
        for i, (v, r) in enumerate(zip(spectrum.eigenvalues, spectrum.implied_rates)):
            w.writerow([i, repr(float(v)), repr(float(r))])


def eigenvectors_to_csv(model: UlamModel, spectrum: Spectrum, path) -> None:
    """One row per active cell: ``cell,c_1..c_d,v_0..v_{k-1}`` with cell-centre coordinates."""
    centers = model.grid.centers()[model.active]
    cells = np.flatnonzero(model.active)
    d = centers.shape[1]
    k = spectrum.eigenvectors.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell"] + [f"c_{i + 1}" for i in range(d)] + [f"v_{j}" for j in range(k)])
        for c, x, v in zip(cells, centers, spectrum.eigenvectors):
            w.writerow([int(c)] + [repr(float(t)) for t in x] + [repr(float(t)) for t in v])


def generator_1d(potential: Potential, beta: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Reversible finite-volume generator of 1-D overdamped Langevin dynamics on the domain box.

    Neighbour rates ``(1/(beta h^2)) exp(-beta (V_j - V_i)/2)``; returns ``(Q, centres)``.
    """
    (lo, hi), = potential.domain_box
    h = (hi - lo) / nodes
    c = lo + h * (np.arange(nodes) + 0.5)
    v = potential.value(c[:, None])
    q = np.zeros((nodes, nodes))
    r = 1.0 / (beta * h * h)
    for i in range(nodes - 1):
        q[i, i + 1] = r * np.exp(-0.5 * beta * (v[i + 1] - v[i]))
        q[i + 1, i] = r * np.exp(-0.5 * beta * (v[i] - v[i + 1]))
    q[np.diag_indices(nodes)] = -q.sum(axis=1)
    return q, c
