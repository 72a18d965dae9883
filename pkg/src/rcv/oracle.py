"""Exact finite-sum losses on small reversible Markov chains.

All continuous quantities reduce to sums here: level sets become label
classes, ``mu_z`` is ``pi`` restricted to a class and renormalised, and the
``1/|Z|`` prefactor becomes one over the number of classes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .torus import TWO_PI, TorusKernelSpec


class ChainSizeError(MemoryError):
    pass


class EmptyClassError(ValueError):
    pass


@dataclass(frozen=True)
class CellGeometry:
    """Uniform ``k**n`` partition of ``[-pi, pi)^n``; state ``i`` is cell ``unravel(i)``."""

    k: int
    n: int

    @property
    def cell_width(self) -> float:
        return TWO_PI / self.k

    @property
    def cell_volume(self) -> float:
        return self.cell_width ** self.n

    def centers(self) -> np.ndarray:
        c = -np.pi + self.cell_width * (np.arange(self.k) + 0.5)
        mesh = np.meshgrid(*([c] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_index(self, x) -> np.ndarray:
        """Flat cell index of points ``x`` (shape ``(..., n)``); angles are wrapped first."""
        x = np.asarray(x, dtype=np.float64)
        a = x - TWO_PI * np.floor((x + np.pi) / TWO_PI)
        idx = np.clip(np.floor((a + np.pi) / self.cell_width).astype(np.int64), 0, self.k - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), (self.k,) * self.n)


@dataclass
class DiscreteChain:
    P: np.ndarray
    pi: np.ndarray
    labels: Optional[np.ndarray] = None
    cell_geometry: Optional[CellGeometry] = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.pi = np.asarray(self.pi, dtype=np.float64)
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1] or self.pi.shape != (self.P.shape[0],):
            raise ValueError("P must be square and pi must match its size")
        if self.labels is not None:
            self.labels = check_labels(self.labels, self.n_states)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def stationarity_error(self) -> float:
        return float(np.abs(self.pi @ self.P - self.pi).max())

    def detailed_balance_error(self) -> float:
        flux = self.pi[:, None] * self.P
        return float(np.abs(flux - flux.T).max())

    def is_reversible(self, tol: float = 1e-12) -> bool:
        return self.stationarity_error() <= tol and self.detailed_balance_error() <= tol


def check_labels(labels, n_states: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n_states,):
        raise ValueError(f"need one label per state ({n_states}), got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0:
        raise ValueError("labels must be nonnegative integers")
    present = np.bincount(labels, minlength=labels.max() + 1)
    empty = np.flatnonzero(present == 0)
    if empty.size:
        raise EmptyClassError(f"label class {int(empty[0])} has no states")
    return labels.astype(np.int64)


# -- chain construction -----------------------------------------------------------------------

def discretize_torus_kernel(spec: TorusKernelSpec, k_per_axis: int, max_bytes: float = 2 ** 28) -> DiscreteChain:
    """Collocate the torus kernel at cell centres: ``P_ij ~ p(x_i, x_j) * vol``, rows normalised."""
    if spec.n > 3:
        raise ValueError("torus discretisation supports n <= 3")
    if not 1 <= k_per_axis <= 64:
        raise ValueError("k_per_axis must lie in [1, 64]")
    geom = CellGeometry(k_per_axis, spec.n)
    m = k_per_axis ** spec.n
    if 8.0 * m * m > max_bytes:
        raise ChainSizeError(f"{m} states need {8.0 * m * m / 2 ** 20:.0f} MiB, above the cap "
                             f"of {max_bytes / 2 ** 20:.0f} MiB")
    c = geom.centers()
    P = spec.density(c[:, None, :], c[None, :, :]) * geom.cell_volume
    P /= P.sum(axis=1, keepdims=True)
    return DiscreteChain(P, np.full(m, 1.0 / m), cell_geometry=geom)


def random_reversible_chain(n_states: int, rng) -> DiscreteChain:
    """``P = D^{-1} S`` for a random symmetric positive ``S``; ``pi`` is proportional to the row sums."""
    rng = np.random.default_rng(rng)
    a = rng.uniform(0.05, 1.0, (n_states, n_states)) * rng.exponential(1.0, (n_states, 1))
    s = a * a.T
    rows = s.sum(axis=1)
    return DiscreteChain(s / rows[:, None], rows / rows.sum())


def random_labels(n_states: int, n_labels: int, rng) -> np.ndarray:
    """A random surjective labelling onto ``{0, ..., n_labels - 1}``."""
    if n_labels > n_states:
        raise ValueError("more labels than states")
    rng = np.random.default_rng(rng)
    labels = np.concatenate([np.arange(n_labels), rng.integers(0, n_labels, n_states - n_labels)])
    return rng.permutation(labels)


def block_chain(block_sizes, rng) -> DiscreteChain:
    """Reversible chain with ``P_xy = Q_ab pi_y / pibar_b``; rows depend only on the block of ``x``.

    ``Q`` is a random reversible chain on the blocks with stationary law ``pibar``.
    """
    rng = np.random.default_rng(rng)
    sizes = np.asarray(block_sizes, dtype=int)
    q = random_reversible_chain(sizes.size, rng)
    blocks = np.repeat(np.arange(sizes.size), sizes)
    w = rng.uniform(0.2, 1.0, blocks.size)
    w /= np.bincount(blocks, weights=w)[blocks]
    pi = q.pi[blocks] * w
    P = q.P[blocks][:, blocks] * (pi / q.pi[blocks])[None, :]
    return DiscreteChain(P, pi, labels=blocks)


def perturbed_chain(base: DiscreteChain, eps: float, rng) -> DiscreteChain:
    """``(1 - eps) P + eps R`` where ``R`` is a random chain reversible for the same ``pi``."""
    rng = np.random.default_rng(rng)
    n = base.n_states
    a = rng.uniform(0.05, 1.0, (n, n))
    s = a * a.T
    np.fill_diagonal(s, 0.0)
    r = s * base.pi[None, :]
    r /= r.sum(axis=1).max()
    r[np.diag_indices(n)] = 1.0 - r.sum(axis=1)
    return DiscreteChain((1.0 - eps) * base.P + eps * r, base.pi.copy(), labels=base.labels)


# -- exact losses -----------------------------------------------------------------------------

def _classes(chain: DiscreteChain, labels):
    labels = check_labels(chain.labels if labels is None else labels, chain.n_states)
    out = []
    for z in range(labels.max() + 1):
        idx = np.flatnonzero(labels == z)
        mu = chain.pi[idx] / chain.pi[idx].sum()
        out.append((idx, mu))
    return out


def constructive_kernels(chain: DiscreteChain, labels=None):
    """Conditional-mean effective kernels: ``pL[z] = sum_i mu_z(i) P_i`` and
    ``pD[:, z] = sum_k mu_z(k) P[:, k] / pi_k``."""
    cls = _classes(chain, labels)
    ratio = chain.P / chain.pi[None, :]
    pL = np.array([mu @ chain.P[idx] for idx, mu in cls])
    pD = np.column_stack([ratio[:, idx] @ mu for idx, mu in cls])
    return pL, pD


def deflat_from_lump(pL: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``p_D(x, z) = p_L(z, x) / pi(x)``, the lumpable-to-deflatable transform."""
    return (pL / pi[None, :]).T


def constructive_deflat_loss(chain: DiscreteChain, pD: np.ndarray, labels=None) -> float:
    """``(1/L) sum_z sum_{k in z} mu_z(k) sum_i pi_i |P_ik / pi_k - pD_iz|``."""
    cls = _classes(chain, labels)
    ratio = chain.P / chain.pi[None, :]
    tot = 0.0
    for z, (idx, mu) in enumerate(cls):
        tot += mu @ (chain.pi @ np.abs(ratio[:, idx] - pD[:, [z]]))
    return float(tot / len(cls))


def exact_losses(chain: DiscreteChain, labels=None) -> dict:
    """The differential and constructive losses as exact sums.

    Keys ``lump_diff``, ``deflat_diff``, ``lump_constructive``, ``deflat_constructive``.
    """
    cls = _classes(chain, labels)
    ratio = chain.P / chain.pi[None, :]
    pL, pD = constructive_kernels(chain, labels)
    ld = dd = lc = 0.0
    for z, (idx, mu) in enumerate(cls):
        rows = chain.P[idx]
        dist = np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
        ld += mu @ dist @ mu
        lc += mu @ np.abs(rows - pL[z]).sum(axis=1)
        cols = ratio[:, idx]
        colsdist = np.einsum("i,ikl->kl", chain.pi, np.abs(cols[:, :, None] - cols[:, None, :]))
        dd += mu @ colsdist @ mu
    nz = len(cls)
    return {"lump_diff": float(ld / nz), "deflat_diff": float(dd / nz),
            "lump_constructive": float(lc / nz),
            "deflat_constructive": constructive_deflat_loss(chain, pD, labels)}


def exact_f(chain: DiscreteChain, labels=None) -> np.ndarray:
    """Per-state integrand ``f_x = (1/L) sum_z sum_{k,l in z} mu_z(k) mu_z(l) |P_xk/pi_k - P_xl/pi_l|``."""
    cls = _classes(chain, labels)
    ratio = chain.P / chain.pi[None, :]
    f = np.zeros(chain.n_states)
    for idx, mu in cls:
        cols = ratio[:, idx]
        f += np.einsum("k,xkl,l->x", mu, np.abs(cols[:, :, None] - cols[:, None, :]), mu)
    return f / len(cls)


def exact_f_and_variance(chain: DiscreteChain, labels=None):
    """``(f, Var_pi(f), E_pi(f))``."""
    f = exact_f(chain, labels)
    mean = float(chain.pi @ f)
    return f, float(chain.pi @ (f - mean) ** 2), mean


def block_masses(pi, blocks) -> np.ndarray:
    """Effective invariant law ``pibar`` on the blocks."""
    return np.bincount(np.asarray(blocks), weights=np.asarray(pi))


def block_values(f, blocks) -> np.ndarray:
    """Value of a block-constant ``f`` on each block (taken from the block's first state)."""
    blocks = np.asarray(blocks)
    first = np.array([np.flatnonzero(blocks == b)[0] for b in range(blocks.max() + 1)])
    return np.asarray(f)[first]


def weighted_variance(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    m = weights @ values
    return float(weights @ (values - m) ** 2)


# -- serialisation ----------------------------------------------------------------------------

def chain_to_csv(chain: DiscreteChain, path) -> None:
    """One row per state: ``state,label,pi,p_0,...,p_{n-1}`` (label -1 when unlabelled)."""
    n = chain.n_states
    labels = chain.labels if chain.labels is not None else np.full(n, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "label", "pi"] + [f"p_{j}" for j in range(n)])
        for i in range(n):
            w.writerow([i, int(labels[i]), repr(float(chain.pi[i]))] + [repr(float(v)) for v in chain.P[i]])


def chain_from_csv(path) -> DiscreteChain:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array(rows[1:], dtype=float)
    labels = body[:, 1].astype(np.int64)
    return DiscreteChain(body[:, 3:], body[:, 2], labels=None if np.all(labels < 0) else labels)


def variance_gap_sweep(base: DiscreteChain, theta, eps_values, rng) -> np.ndarray:
    """``|Var_pi(f_eps) - Var_pi(f_L o xi)|`` along ``(1 - eps) P + eps R`` for one fixed ``R``.

    ``base`` must be a block chain (its labels are ``xi``); ``f_L o xi`` is the
    integrand of the unperturbed chain, evaluated with the candidate labels ``theta``.
    """
    seed = np.random.default_rng(rng).integers(2 ** 63)
    _, var0, _ = exact_f_and_variance(base, theta)
    out = []
    for eps in eps_values:
        ch = perturbed_chain(base, float(eps), seed)
        _, var, _ = exact_f_and_variance(ch, theta)
        out.append(abs(var - var0))
    return np.array(out)
