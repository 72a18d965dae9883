import numpy as np
import pytest

from rcv import loss as L
from rcv.coordinates import linear_rc, linear_rc_alpha, polar_rc
from rcv.oracle import discretize_torus_kernel, exact_losses
from rcv.sde import GibbsDensity, SdeConfig, circular_potential
from rcv.torus import INF, TorusKernelSpec

SMALL = L.LossQuadConfig(n_z=7, n_level=64, m_outer=64, n_pairs=64, seed=3)


def test_quad_config_validation():
    with pytest.raises(ValueError):
        L.LossQuadConfig(n_level=1)
    with pytest.raises(ValueError):
        L.LossQuadConfig(n_level=4, n_pairs=7)
    with pytest.raises(ValueError):
        L.LossQuadConfig(level_weighting="other")


def test_equilibrated_kernel_has_zero_loss():
    acc = L.equilibrated_access(lambda y: np.full(len(y), 1 / (2 * np.pi) ** 2), 2)
    e = L.loss_deflat(linear_rc([1.0, 1.0]), acc, L.uniform_torus_sampler(2), SMALL)
    assert e.value == 0.0 and np.all(e.per_sample_f == 0.0)
    assert L.loss_lump_differential(linear_rc([1.0, 1.0]), acc, SMALL).value == 0.0


def test_sigma_inf_slow_coordinate_is_exact():
    acc = L.torus_access(TorusKernelSpec(2, 1.0, INF))
    for weighting in L.LEVEL_WEIGHTINGS:
        q = L.LossQuadConfig(n_z=7, n_level=64, m_outer=64, n_pairs=64, seed=3, level_weighting=weighting)
        assert L.loss_deflat(linear_rc_alpha(0.0), acc, L.uniform_torus_sampler(2), q).value < 1e-12


def test_fast_coordinate_is_worse_than_slow():
    acc = L.torus_access(TorusKernelSpec(2, 1.0, 2.0))
    slow = L.loss_deflat(linear_rc_alpha(0.0), acc, L.uniform_torus_sampler(2), SMALL)
    fast = L.loss_deflat(linear_rc_alpha(np.pi / 2), acc, L.uniform_torus_sampler(2), SMALL)
    assert fast.value > slow.value + 3 * (fast.std_error + slow.std_error)


def test_deterministic_given_seed():
    acc = L.torus_access(TorusKernelSpec(2, 1.0, 1.0))
    a = L.loss_deflat(linear_rc([1.0, 1.0]), acc, L.uniform_torus_sampler(2), SMALL)
    b = L.loss_deflat(linear_rc([1.0, 1.0]), acc, L.uniform_torus_sampler(2), SMALL)
    np.testing.assert_array_equal(a.per_sample_f, b.per_sample_f)


def test_pair_levels_path_matches_generic():
    acc = L.torus_access(TorusKernelSpec(2, 0.7, 1.3))
    rc = linear_rc([1.0, -0.5])
    pairs = L.level_pairs(rc, acc.stationary_density, SMALL)
    xs = np.random.default_rng(0).uniform(-np.pi, np.pi, (10, 2))
    fast = L.level_values(xs, pairs, acc)
    generic = L.level_values(xs, pairs, L.TransitionAccess("x", 2, acc.ratio_rows, acc.l1_rows,
                                                           acc.stationary_density, acc.forward))
    np.testing.assert_allclose(fast, generic, rtol=1e-10, atol=1e-13)


def test_both_weightings_share_samples():
    acc = L.torus_access(TorusKernelSpec(2, 0.5, 1.0))
    rc = linear_rc([1.0, 1.0])
    both = L.loss_deflat_both(rc, acc, L.uniform_torus_sampler(2), SMALL)
    assert both["normalized"].value == pytest.approx(L.loss_deflat(rc, acc, L.uniform_torus_sampler(2), SMALL).value)
    q = L.LossQuadConfig(n_z=7, n_level=64, m_outer=64, n_pairs=64, seed=3, level_weighting="coarea")
    assert both["coarea"].value == pytest.approx(L.loss_deflat(rc, acc, L.uniform_torus_sampler(2), q).value)


def test_integrand_matches_bruteforce():
    spec = TorusKernelSpec(2, 1.0, 1.0)
    acc = L.torus_access(spec)
    rc = linear_rc([1.0, 0.0])
    pairs = L.level_pairs(rc, acc.stationary_density, SMALL)
    x = np.array([0.4, -1.0])
    vol = (2 * np.pi) ** 2
    direct = np.mean([np.mean(np.abs(spec.density(x, a) - spec.density(x, b)) * vol)
                      for a, b in zip(pairs.y1, pairs.y2)])
    assert L.integrand_f(x, rc, acc, SMALL, pairs) == pytest.approx(direct, rel=1e-12)


def test_sandwich_and_equivalence_on_cells():
    chain = discretize_torus_kernel(TorusKernelSpec(2, 1.0, 2.0), 8)
    acc = L.cell_access(chain)
    rc = linear_rc_alpha(0.0)
    q = L.LossQuadConfig(n_z=8, n_level=128, m_outer=512, n_pairs=512, seed=1)
    pairs = L.level_pairs(rc, acc.stationary_density, q)
    hD, dD = L.loss_deflat_constructive(rc, acc, L.uniform_torus_sampler(2), q, pairs)
    hL = L.loss_lump_constructive(rc, acc, q, pairs)
    assert hD.value <= dD.value <= 2 * hD.value
    labels = np.floor((rc(chain.cell_geometry.centers()) + 1) / 2 * 8).astype(int)
    ex = exact_losses(chain, labels)
    assert hD.value == pytest.approx(ex["deflat_constructive"], rel=0.03)
    assert hL.value == pytest.approx(ex["lump_constructive"], rel=0.03)
    assert dD.value == pytest.approx(ex["deflat_diff"], rel=0.03)


def test_lump_constructive_unavailable_for_kde():
    pot = circular_potential(10.0)
    acc = L.kde_access(pot, SdeConfig(tau=0.01, dt=1e-3), 50, GibbsDensity(pot, 1.0))
    with pytest.raises(NotImplementedError):
        L.loss_lump_constructive(polar_rc("angle"), acc, SMALL)


def test_coarea_needs_masses():
    from rcv.coordinates import ReactionCoordinate, LevelSetSample
    rc = ReactionCoordinate(lambda x: x[..., 0], lambda x: np.ones_like(x), (-1.0, 1.0), "custom", "c",
                            sampler=lambda z, n, s: LevelSetSample(z, np.full((n, 1), z), np.full(n, 1 / n)))
    with pytest.raises(ValueError):
        L.level_pairs(rc, None, L.LossQuadConfig(n_z=3, n_level=4, n_pairs=4, level_weighting="coarea"))


def test_level_set_failure_reports_level():
    from rcv.coordinates import ReactionCoordinate

    def bad(z, n, s):
        raise RuntimeError("boom")

    rc = ReactionCoordinate(lambda x: x[..., 0], lambda x: np.ones_like(x), (0.0, 1.0), "custom", "c", sampler=bad)
    with pytest.raises(L.LevelSetFailure) as info:
        L.level_pairs(rc, None, L.LossQuadConfig(n_z=2, n_level=4, n_pairs=4))
    assert info.value.z == pytest.approx(0.25)


def test_kde_access_equilibrium_limit():
    # a long lag equilibrates the process, so the smoothed ratio is close to one everywhere
    pot = circular_potential(1.0)
    pi = GibbsDensity(pot, 1.0)
    acc = L.kde_access(pot, SdeConfig(tau=12.0, dt=1e-2, seed=2), 4000, pi, denominator="smoothed")
    y = np.array([[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 12, endpoint=False)])
    r = acc.ratio_rows(np.array([[1.0, 0.0]]), y)
    assert np.all(np.abs(r - 1) < 0.25)


def test_variance_of_f():
    e = L.LossEstimate(1.0, 0.1, 4, np.array([1.0, 1.0, 1.0, 1.0]))
    assert L.variance_of_f(e) == (0.0, 0.0)
    with pytest.raises(L.InsufficientSamplesError):
        L.variance_of_f(L.LossEstimate(1.0, 0.1, 1, np.array([1.0])))


def test_mc_error_rate():
    acc = L.torus_access(TorusKernelSpec(2, 0.5, 2.0))
    c = L.mc_error_curve(linear_rc([1.0, 1.0]), acc, L.uniform_torus_sampler(2), [16, 64, 256], 40, 5,
                         L.LossQuadConfig(n_z=7, n_level=32, n_pairs=32), ref_factor=20)
    assert abs(c.slope() + 0.5) < 0.15
    np.testing.assert_allclose(c.std_over_sqrt_m, np.sqrt(c.var_f / c.m_list))


def test_loss_csv(tmp_path):
    e = L.LossEstimate(0.5, 0.01, 3, np.array([0.4, 0.5, 0.6]))
    L.write_loss_csv(tmp_path / "l.csv", [L.loss_row("phi", 1.0, 10.0, 0.1, e, 7)])
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == ",".join(L.CSV_COLUMNS)
    assert lines[1].startswith("phi,1.0,10.0,0.1,3,0.5,0.01,")
