"""Experiment runners behind the command line and the acceptance suite.

Every runner takes a resolved parameter mapping, a seed, an output directory
and an executor, writes its CSV files and returns ``(artifacts, summary)``;
the summary holds the scalar statistics the acceptance checks are built on.
Tasks submitted to the executor are pure functions of their arguments and
results are collected in submission order, so outputs do not depend on the
pool size.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import loss as L
from .coordinates import linear_rc, linear_rc_alpha, polar_rc
from .oracle import (
    block_chain, block_masses, block_values, constructive_deflat_loss, constructive_kernels, deflat_from_lump,
    discretize_torus_kernel, exact_f_and_variance, exact_losses, random_labels, random_reversible_chain,
    variance_gap_sweep, weighted_variance,
)
from .sde import GibbsDensity, SdeConfig, circular_potential, sample_stationary
from .spectral import (
    EscapeWarning, cluster_gap_statistic, eigenvectors_to_csv, gap_report, implied_rate_ratio, leading_spectrum,
    spectrum_to_csv, ulam_estimate,
)
from .torus import INF, TorusKernelSpec, decay_slope, lumpability_distance, parse_sigma, sigma_label

log = logging.getLogger(__name__)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _sigma_key(sigma):
    return "inf" if sigma is INF else repr(float(sigma))


def _map(executor, fn, items):
    if executor is None:
        return [fn(i) for i in items]
    return list(executor.map(fn, items))


def _quad(p, seed, weighting=None):
    return L.LossQuadConfig(n_z=p["n_z"], n_level=p["n_level"], m_outer=p["m_outer"], n_pairs=p["n_pairs"],
                            seed=seed, level_weighting=weighting or p["level_weighting"])


# -- lumpability decay ------------------------------------------------------------------------

def run_lumpability_decay(p, seed, out: Path, executor=None):
    tasks = [(n, s) for n in p["n_values"] for s in p["sigmas"]]

    def one(t):
        n, s = t
        return lumpability_distance(TorusKernelSpec(n, p["tau"], float(s)), nodes=p["nodes"])

    dist = _map(executor, one, tasks)
    path = out / "lumpability_decay.csv"
    _write_rows(path, ["n", "tau", "sigma", "distance"],
                [(n, float(p["tau"]), float(s), d) for (n, s), d in zip(tasks, dist)])
    table = {}
    for (n, s), d in zip(tasks, dist):
        table.setdefault(n, []).append((float(s), d))
    summary = {}
    lo, hi = p["fit_range"]
    for n, rows in table.items():
        s, d = map(np.asarray, zip(*rows))
        sel = (s >= lo) & (s <= hi)
        summary[f"slope_n{n}"] = decay_slope(s[sel], d[sel]) if sel.sum() >= 2 else float("nan")
        summary[f"decreasing_n{n}"] = bool(np.all(np.diff(d[np.argsort(s)]) < 0))
    summary["target_slope"] = -p["tau"] ** 2 / 2
    if 2 in table and 3 in table:
        d2 = np.array([d for _, d in table[2]])
        d3 = np.array([d for _, d in table[3]])
        if d2.size == d3.size:
            ratio = d3 / d2
            summary["max_ratio_n3_n2"] = float(max(ratio.max(), (1 / ratio).max()))
    return [path], summary


# -- loss landscape -----------------------------------------------------------------------------

def _alpha_grid(n):
    return np.linspace(-np.pi / 2, np.pi / 2, n)


def run_loss_landscape(p, seed, out: Path, executor=None):
    alphas = _alpha_grid(p["n_alpha"])
    sigmas = [parse_sigma(s) for s in p["sigmas"]]
    quad = _quad(p, seed)
    sampler = L.uniform_torus_sampler(2)
    tasks = [(s, a) for s in sigmas for a in alphas]

    def one(t):
        s, a = t
        acc = L.torus_access(TorusKernelSpec(2, p["tau"], s))
        return L.loss_deflat_both(linear_rc_alpha(float(a)), acc, sampler, quad)

    res = _map(executor, one, tasks)
    paths, summary = [], {}
    for wname in L.LEVEL_WEIGHTINGS:
        rows = [L.loss_row("theta_alpha", float(a), _sigma_key(s), float(p["tau"]), r[wname], seed)
                for (s, a), r in zip(tasks, res)]
        name = "loss_landscape.csv" if wname == p["level_weighting"] else f"loss_landscape_{wname}.csv"
        L.write_loss_csv(out / name, rows)
        paths.append(out / name)
        for s in sigmas:
            vals = np.array([r[wname].value for (ss, _), r in zip(tasks, res) if ss == s])
            ses = np.array([r[wname].std_error for (ss, _), r in zip(tasks, res) if ss == s])
            key = f"{wname}_sigma={sigma_label(s)}"
            summary[key] = {"argmin": _ties(alphas, vals, np.min), "argmax": _ties(alphas, vals, np.max),
                            "values": vals.tolist(), "std_errors": ses.tolist(),
                            "value_at_0": float(vals[np.argmin(np.abs(alphas))]),
                            "se_at_0": float(ses[np.argmin(np.abs(alphas))])}
    summary["alphas"] = alphas.tolist()
    return paths, summary


def _ties(alphas, vals, fn, rel=1e-9):
    """All grid points attaining the extremum (the landscape is symmetric in alpha -> -alpha)."""
    best = fn(vals)
    return [float(a) for a, v in zip(alphas, vals) if abs(v - best) <= rel * max(abs(best), 1e-300)]


# -- variance study ---------------------------------------------------------------------------

def run_variance_study(p, seed, out: Path, executor=None):
    sigmas = [parse_sigma(s) for s in p["sigmas"]]
    tasks = [(n, s) for n in p["n_values"] for s in sigmas]

    def one(t):
        n, s = t
        quad = _quad(p, seed)
        rc = linear_rc(np.ones(n), name=f"theta_{n}")
        return L.loss_deflat_both(rc, L.torus_access(TorusKernelSpec(n, p["tau"], s)),
                                  L.uniform_torus_sampler(n), quad)

    res = _map(executor, one, tasks)
    paths, summary = [], {}
    for wname in L.LEVEL_WEIGHTINGS:
        rows = [L.loss_row(f"theta_{n}", n, _sigma_key(s), float(p["tau"]), r[wname], seed)
                for (n, s), r in zip(tasks, res)]
        name = "variance_study.csv" if wname == p["level_weighting"] else f"variance_study_{wname}.csv"
        L.write_loss_csv(out / name, rows)
        paths.append(out / name)
        for (n, s), r in zip(tasks, res):
            var, rel = L.variance_of_f(r[wname])
            summary[f"{wname}_n{n}_sigma={sigma_label(s)}"] = {"var_f": var, "rel_var_f": rel,
                                                                 "loss": r[wname].value}

    # integrand on a grid for n = 2: constancy along x2 at fixed x1
    g = p["grid_nodes"]
    ax = -np.pi + 2 * np.pi * (np.arange(g) + 0.5) / g
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    rcs = {"theta_0": linear_rc([1.0, 0.0], name="theta_0"), "theta_2": linear_rc([1.0, 1.0], name="theta_2")}
    gtasks = [(name, s) for name in rcs for s in sigmas]

    def grid_one(t):
        name, s = t
        acc = L.torus_access(TorusKernelSpec(2, p["tau"], s))
        pairs = L.level_pairs(rcs[name], acc.stationary_density, _quad(p, seed))
        return L.level_values(pts, pairs, acc) @ (pairs.weights / len(pairs.weights))

    fgrid = _map(executor, grid_one, gtasks)
    rows = []
    for (name, s), f in zip(gtasks, fgrid):
        rows += [(name, _sigma_key(s), x[0], x[1], v) for x, v in zip(pts, f)]
        cv = _cv_along_x2(f.reshape(g, g))
        summary[f"cv_x2_{name}_sigma={sigma_label(s)}"] = cv
    _write_rows(out / "integrand_grid.csv", ["rc_id", "sigma", "x1", "x2", "f"], rows)
    paths.append(out / "integrand_grid.csv")
    return paths, summary


def _cv_along_x2(f2d):
    """Largest coefficient of variation of ``f`` along ``x2`` over the ``x1`` rows (0 where ``f`` is 0)."""
    mean = f2d.mean(axis=1)
    std = f2d.std(axis=1)
    cv = np.where(std == 0, 0.0, std / np.where(mean == 0, 1.0, np.abs(mean)))
    cv = np.where((std > 0) & (mean == 0), np.inf, cv)
    return float(cv.max())


# -- Monte Carlo error --------------------------------------------------------------------

def run_mc_error(p, seed, out: Path, executor=None):
    sigmas = [parse_sigma(s) for s in p["sigmas"]]
    tasks = [(n, s) for n in p["n_values"] for s in sigmas]

    def one(t):
        n, s = t
        quad = _quad(p, seed)
        rc = linear_rc(np.ones(n), name=f"theta_{n}")
        return L.mc_error_curve(rc, L.torus_access(TorusKernelSpec(n, p["tau"], s)), L.uniform_torus_sampler(n),
                                p["m_list"], p["n_trials"], seed, quad,
                                reference_points=L.torus_midpoint_grid(n, p["reference_nodes"][str(n)]))

    curves = _map(executor, one, tasks)
    rows = []
    summary = {}
    for (n, s), c in zip(tasks, curves):
        for j, m in enumerate(c.m_list):
            rows.append((f"theta_{n}", _sigma_key(s), float(p["tau"]), int(m), c.rel_error[j],
                         c.var_over_sqrt_m[j] / c.reference, c.std_over_sqrt_m[j] / c.reference,
                         c.var_over_sqrt_m[j], c.std_over_sqrt_m[j], int(p["n_trials"]), seed))
        summary[f"n{n}_sigma={sigma_label(s)}"] = {"slope": c.slope(), "rel_error": c.rel_error.tolist(),
                                                   "reference": c.reference, "var_f": c.var_f}
    path = out / "mc_error.csv"
    _write_rows(path, ["rc_id", "sigma", "tau", "M", "rel_error", "var_over_sqrt_m_rel", "std_over_sqrt_m_rel",
                       "var_over_sqrt_m", "std_over_sqrt_m", "n_trials", "seed"], rows)
    # paired comparison of the largest against the smallest sigma at every M
    finite = [s for s in sigmas if s is not INF]
    if INF in sigmas and finite:
        ref_s = min(finite)
        sign_rows = []
        for n in p["n_values"]:
            a = curves[tasks.index((n, INF))].trial_errors
            b = curves[tasks.index((n, ref_s))].trial_errors
            for j, m in enumerate(p["m_list"]):
                wins = int(np.sum(a[:, j] < b[:, j]))
                pval = float(stats.binomtest(wins, a.shape[0], 0.5, alternative="greater").pvalue)
                sign_rows.append((f"theta_{n}", int(m), wins, a.shape[0], pval))
                summary[f"sign_n{n}_M{m}"] = {"wins": wins, "trials": a.shape[0], "p_value": pval,
                                              "mean_inf": float(a[:, j].mean()), "mean_finite": float(b[:, j].mean())}
        _write_rows(out / "mc_error_sign_test.csv", ["rc_id", "M", "wins_inf", "trials", "p_value"], sign_rows)
        return [path, out / "mc_error_sign_test.csv"], summary
    return [path], summary


# -- circular system -----------------------------------------------------------------------------

def run_circular_loss(p, seed, out: Path, executor=None):
    sigmas = [float(s) for s in p["sigmas"]]
    names = {"phi": "angle", "r": "radius"}
    tasks = [(s, rc) for s in sigmas for rc in names]

    def one(t):
        s, rcname = t
        pot = circular_potential(s)
        pi = GibbsDensity(pot, p["beta"])
        cfg = SdeConfig(beta=p["beta"], dt=p["dt"], tau=p["tau"], seed=seed)
        acc = L.kde_access(pot, cfg, p["n_replicas"], pi, bandwidth=p["bandwidth"],
                           denominator=p["denominator"])
        xs = sample_stationary(pot, p["beta"], p["m_outer"], seed=[seed, 0x5A]).samples
        quad = _quad(p, seed)
        return L.loss_deflat_both(polar_rc(names[rcname]), acc, lambda m, _s: xs[:m], quad)

    res = _map(executor, one, tasks)
    paths, summary = [], {}
    for wname in L.LEVEL_WEIGHTINGS:
        rows = [L.loss_row(rc, s, s, float(p["tau"]), r[wname], seed) for (s, rc), r in zip(tasks, res)]
        name = "circular_loss.csv" if wname == p["level_weighting"] else f"circular_loss_{wname}.csv"
        L.write_loss_csv(out / name, rows)
        paths.append(out / name)
        for (s, rc), r in zip(tasks, res):
            summary[f"{wname}_{rc}_sigma={s:g}"] = {"loss": r[wname].value, "std_error": r[wname].std_error}
    return paths, summary


# -- spectrum -----------------------------------------------------------------------------------

def run_spectrum(p, seed, out: Path, executor=None):
    sigmas = [float(s) for s in p["sigmas"]]

    def one(s):
        cfg = SdeConfig(beta=p["beta"], dt=p["dt"], tau=p["tau"], seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EscapeWarning)
            model = ulam_estimate(circular_potential(s), cfg, p["grid_k"], p["samples_per_cell"], seed)
        return model, leading_spectrum(model, p["k_eigs"])

    res = _map(executor, one, sigmas)
    paths, summary, rows = [], {}, []
    for s, (model, spec) in zip(sigmas, res):
        tag = f"{s:g}"
        spectrum_to_csv(spec, out / f"spectrum_sigma{tag}.csv")
        eigenvectors_to_csv(model, spec, out / f"eigenvectors_sigma{tag}.csv")
        paths += [out / f"spectrum_sigma{tag}.csv", out / f"eigenvectors_sigma{tag}.csv"]
        stat = cluster_gap_statistic(spec, p["cluster"])
        ratio = implied_rate_ratio(spec, p["cluster"])
        gr = gap_report(spec)
        rows.append((s, stat, ratio, gr.largest_gap, model.meta["escaped_fraction"]))
        summary[f"sigma={tag}"] = {"eigenvalues": spec.eigenvalues.tolist(), "cluster_gap_statistic": stat,
                                   "implied_rate_ratio": ratio, "largest_gap": gr.largest_gap,
                                   "escaped_fraction": model.meta["escaped_fraction"]}
    _write_rows(out / "spectrum_summary.csv",
                ["sigma", "cluster_gap_statistic", "implied_rate_ratio", "largest_gap", "escaped_fraction"], rows)
    paths.append(out / "spectrum_summary.csv")
    return paths, summary


# -- oracle suite ---------------------------------------------------------------------------------

def _oracle_chain(seed, i, max_states, max_labels):
    rng = np.random.default_rng([seed, 0x0AC1E, i])
    n = int(rng.integers(2, max_states + 1))
    chain = random_reversible_chain(n, rng)
    labels = random_labels(n, int(rng.integers(1, min(max_labels, n) + 1)), rng)
    return chain, labels


def run_oracle_suite(p, seed, out: Path, executor=None):
    rows = []
    worst = {"equivalence": 0.0, "sandwich_violation": 0.0}
    for i in range(p["n_chains"]):
        chain, labels = _oracle_chain(seed, i, p["max_states"], p["max_labels"])
        ex = exact_losses(chain, labels)
        pL, _ = constructive_kernels(chain, labels)
        via_transform = constructive_deflat_loss(chain, deflat_from_lump(pL, chain.pi), labels)
        eq = abs(ex["lump_constructive"] - via_transform)
        viol = 0.0
        for kind in ("lump", "deflat"):
            hat, tilde = ex[f"{kind}_constructive"], ex[f"{kind}_diff"]
            viol = max(viol, hat - tilde, tilde - 2 * hat)
        worst["equivalence"] = max(worst["equivalence"], eq)
        worst["sandwich_violation"] = max(worst["sandwich_violation"], viol)
        rows.append((i, chain.n_states, int(labels.max()) + 1, ex["lump_diff"], ex["deflat_diff"],
                     ex["lump_constructive"], ex["deflat_constructive"], via_transform, eq))
    _write_rows(out / "oracle_suite.csv", ["chain", "n_states", "n_labels", "lump_diff", "deflat_diff",
                                           "lump_constructive", "deflat_constructive",
                                           "deflat_constructive_from_lump", "equivalence_error"], rows)

    eps = np.asarray(p["eps_values"], dtype=float)
    sweep_rows, slopes, identity = [], [], 0.0
    for i in range(p["n_block_chains"]):
        rng = np.random.default_rng([seed, 0xB10C, i])
        chain = block_chain(rng.integers(2, 5, rng.integers(2, 5)), rng)
        # classes of at least two states on average, so the integrand is not identically zero
        theta = random_labels(chain.n_states, max(1, min(p["max_labels"], chain.n_states // 2)), rng)
        f, var, _ = exact_f_and_variance(chain, theta)
        fl = block_values(f, chain.labels)
        identity = max(identity, abs(var - weighted_variance(fl, block_masses(chain.pi, chain.labels))),
                       max(np.ptp(f[chain.labels == b]) for b in range(chain.labels.max() + 1)))
        gap = variance_gap_sweep(chain, theta, eps, rng)
        slopes.append(float(np.polyfit(np.log(eps), np.log(gap), 1)[0]))
        sweep_rows += [(i, e, g) for e, g in zip(eps, gap)]
    _write_rows(out / "variance_sweep.csv", ["chain", "eps", "variance_gap"], sweep_rows)
    summary = {"max_equivalence_error": worst["equivalence"],
               "max_sandwich_violation": worst["sandwich_violation"],
               "max_block_identity_error": identity, "eps_slopes": slopes,
               "median_eps_slope": float(np.median(slopes))}
    paths = [out / "oracle_suite.csv", out / "variance_sweep.csv"]
    if p["consistency"]:
        cpaths, csum = run_estimator_consistency(p["consistency_parameters"], seed, out, executor)
        paths += cpaths
        summary["consistency"] = csum
    return paths, summary


def run_estimator_consistency(p, seed, out: Path, executor=None):
    """Continuous estimators on the cell-discretised torus chain against its exact sums.

    Coordinates are aligned with the cells (``n_z = k`` levels), so every level
    set is a union of whole cells and the continuous losses equal the chain's.
    """
    spec = TorusKernelSpec(2, p["tau"], parse_sigma(p["sigma"]))
    chain = discretize_torus_kernel(spec, p["k"])
    acc = L.cell_access(chain)
    geom = chain.cell_geometry
    quad = L.LossQuadConfig(n_z=p["k"], n_level=p["n_level"], m_outer=p["m_outer"], n_pairs=p["n_pairs"],
                            seed=seed)
    rows, summary = [], {}
    for alpha in p["alphas"]:
        rc = linear_rc_alpha(float(alpha))
        labels = np.clip(np.floor((rc(geom.centers()) + 1) / 2 * p["k"]).astype(int), 0, p["k"] - 1)
        ex = exact_losses(chain, labels)
        pairs = L.level_pairs(rc, acc.stationary_density, quad)
        hD, dD = L.loss_deflat_constructive(rc, acc, L.uniform_torus_sampler(2), quad, pairs)
        est = {"lump_diff": L.loss_lump_differential(rc, acc, quad, pairs), "deflat_diff": dD,
               "lump_constructive": L.loss_lump_constructive(rc, acc, quad, pairs), "deflat_constructive": hD}
        for k, e in est.items():
            rel = abs(e.value - ex[k]) / ex[k] if ex[k] > 0 else abs(e.value)
            rows.append((f"{float(alpha):.6g}", k, ex[k], e.value, e.std_error, rel))
            summary[f"alpha={float(alpha):.6g}_{k}"] = {"exact": ex[k], "estimate": e.value, "rel_error": rel}
    _write_rows(out / "estimator_consistency.csv",
                ["alpha", "loss", "exact", "estimate", "std_error", "rel_error"], rows)
    rc = linear_rc_alpha(float(p["alphas"][-1]))
    curve = L.mc_error_curve(rc, acc, L.uniform_torus_sampler(2), p["m_list"], p["n_trials"], seed,
                             replace(quad, n_pairs=p["curve_pairs"]), ref_factor=p["ref_factor"])
    summary["mc_slope"] = curve.slope()
    summary["mc_rel_error"] = curve.rel_error.tolist()
    _write_rows(out / "estimator_consistency_mc.csv", ["M", "rel_error"], zip(curve.m_list, curve.rel_error))
    return [out / "estimator_consistency.csv", out / "estimator_consistency_mc.csv"], summary


# -- registry -------------------------------------------------------------------------------------

_LOSS_QUAD = {"n_z": 21, "n_level": 256, "n_pairs": 256}

DEFAULTS = {
    "lumpability-decay": {"n_values": [2, 3], "tau": 1.0, "nodes": 256, "fit_range": [2.0, 4.0],
                          "sigmas": [0.25 * i for i in range(1, 17)]},
    "loss-landscape": dict(_LOSS_QUAD, n_alpha=33, sigmas=[1.0, 2.0, "inf"], tau=1.0, m_outer=400,
                           level_weighting="normalized"),
    "variance-study": dict(_LOSS_QUAD, n_values=[2, 3], sigmas=[1.0, 2.0, 4.0, "inf"], tau=0.5, m_outer=2000,
                           level_weighting="coarea", grid_nodes=32),
    "mc-error": dict(_LOSS_QUAD, n_values=[2, 3], sigmas=[2.0, "inf"], tau=0.5, m_outer=1,
                     level_weighting="coarea", m_list=[16, 64, 256, 1024], n_trials=100,
                     reference_nodes={"2": 64, "3": 32}),
    "circular-loss": dict(_LOSS_QUAD, sigmas=[1.0, 10.0, 100.0], tau=0.1, beta=1.0, dt=1e-3, n_replicas=1000,
                          m_outer=100, bandwidth=None, denominator="smoothed", level_weighting="coarea"),
    "spectrum": {"sigmas": [1.0, 10.0, 100.0], "tau": 0.1, "beta": 1.0, "dt": 1e-3, "grid_k": 48,
                 "samples_per_cell": 200, "k_eigs": 8, "cluster": 5},
    "oracle-suite": {"n_chains": 100, "max_states": 20, "max_labels": 5, "n_block_chains": 25,
                     "eps_values": [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1], "consistency": False,
                     "consistency_parameters": {"k": 32, "sigma": 2.0, "tau": 1.0, "alphas": [0.0, 1.5707963267948966],
                                                "n_level": 512, "n_pairs": 2048, "m_outer": 4096,
                                                "m_list": [16, 64, 256, 1024], "n_trials": 50,
                                                "curve_pairs": 256, "ref_factor": 20}},
}

RUNNERS = {
    "lumpability-decay": run_lumpability_decay,
    "loss-landscape": run_loss_landscape,
    "variance-study": run_variance_study,
    "mc-error": run_mc_error,
    "circular-loss": run_circular_loss,
    "spectrum": run_spectrum,
    "oracle-suite": run_oracle_suite,
}

DESCRIPTIONS = {
    "lumpability-decay": "K-norm distance of the torus kernel to its lumped kernel against sigma",
    "loss-landscape": "differential deflatability loss of the rotated linear coordinates, n = 2",
    "variance-study": "variance of the loss integrand against sigma and dimension, and its grid values",
    "mc-error": "relative outer Monte Carlo error against the number of start points",
    "circular-loss": "loss of the polar angle and radius for the five-well circular potential",
    "spectrum": "leading Ulam spectrum of the circular potential and its cluster-gap statistic",
    "oracle-suite": "exact-sum identities on random reversible chains (optionally estimator consistency)",
}

# budget declared in every manifest, in seconds of single-machine wall time at the defaults
BUDGETS = {"lumpability-decay": 120, "loss-landscape": 900, "variance-study": 900, "mc-error": 1200,
           "circular-loss": 1800, "spectrum": 600, "oracle-suite": 600}


def resolve(experiment: str, parameters: dict) -> dict:
    """Defaults overlaid with ``parameters`` (nested for ``consistency_parameters``)."""
    p = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS[experiment].items()}
    for k, v in parameters.items():
        if isinstance(p.get(k), dict) and isinstance(v, dict):
            p[k].update(v)
        else:
            p[k] = v
    return p
