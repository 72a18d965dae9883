import numpy as np
import pytest
from scipy.linalg import expm

from rcv.oracle import random_reversible_chain
from rcv.sde import SdeConfig, double_well_potential, flat_potential
from rcv.spectral import (
    Spectrum, UlamGrid, UlamModel, cluster_gap_statistic, eigenvectors_to_csv, gap_report, generator_1d,
    implied_rate_ratio, leading_spectrum, reversibilize, spectrum_to_csv, ulam_estimate,
)


def test_grid_locate():
    g = UlamGrid(np.array([[-1.0, 1.0], [0.0, 2.0]]), 4)
    idx, inside = g.locate(np.array([[-0.9, 0.1], [0.9, 1.9], [1.5, 0.0]]))
    assert idx[0] == 0 and idx[1] == 15 and list(inside) == [True, True, False]
    idx, inside = g.locate(np.array([[1.5, 0.0]]), periodic=True)
    assert inside[0] and idx[0] == 1 * 4  # 1.5 wraps to -0.5


def test_reversibilize_keeps_reversible_chain():
    ch = random_reversible_chain(12, 1)
    P, d = reversibilize(ch.P, ch.pi)
    np.testing.assert_allclose(P, ch.P, atol=1e-14)
    np.testing.assert_allclose(d, ch.pi, atol=1e-14)


def test_spectrum_of_known_chain():
    ch = random_reversible_chain(10, 4)
    s = leading_spectrum(UlamModel.from_matrix(ch.P, ch.pi), 10)
    ref = np.sort(np.linalg.eigvals(ch.P).real)[::-1]
    np.testing.assert_allclose(s.eigenvalues, ref, atol=1e-12)
    assert s.eigenvalues[0] == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(ch.P @ s.eigenvectors, s.eigenvectors * s.eigenvalues, atol=1e-11)
    # L2(pi)-orthonormal
    np.testing.assert_allclose(s.eigenvectors.T @ (ch.pi[:, None] * s.eigenvectors), np.eye(10), atol=1e-10)


def test_gap_report_largest_drop():
    s = Spectrum(np.array([1.0, 0.95, 0.9, 0.3, 0.25]), np.eye(5), 1.0)
    r = gap_report(s)
    assert r.largest_gap == 2
    assert r.raw_differences[2] == pytest.approx(0.6)
    assert r.gap_ratios[2] == pytest.approx(0.1 / 0.7)


def test_cluster_statistic_values():
    lam = np.array([1.0, 0.95, 0.94, 0.93, 0.92, 0.2, 0.1])
    s = Spectrum(lam, np.eye(7), 0.1)
    ra, rb = -np.log(0.92) / 0.1, -np.log(0.2) / 0.1
    assert cluster_gap_statistic(s) == pytest.approx(ra / (rb - ra))
    assert implied_rate_ratio(s) == pytest.approx(np.log(0.92) / np.log(0.2))


def test_ulam_double_well_matches_generator():
    pot = double_well_potential(2.0)
    tau = 0.5
    model = ulam_estimate(pot, SdeConfig(dt=1e-3, tau=tau, seed=1), 40, 300, seed=3)
    s = leading_spectrum(model, 3)
    q, _ = generator_1d(pot, 1.0, 800)
    ref = np.sort(np.linalg.eigvals(expm(tau * q)).real)[::-1][:3]
    assert s.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    assert s.eigenvalues[1] == pytest.approx(ref[1], abs=0.02)
    # the slow eigenvector changes sign once, between the wells
    v = s.eigenvectors[:, 1]
    assert np.sum(np.diff(np.sign(v[np.abs(v) > 0.1 * np.abs(v).max()])) != 0) == 1


def test_ulam_rows_stochastic_and_semigroup():
    pot = flat_potential(1, box=1.0)
    m1 = ulam_estimate(pot, SdeConfig(dt=1e-3, tau=0.05, seed=1), 8, 2000, seed=1, periodic=True)
    m2 = ulam_estimate(pot, SdeConfig(dt=1e-3, tau=0.1, seed=1), 8, 2000, seed=2, periodic=True)
    np.testing.assert_allclose(m1.matrix.sum(axis=1), 1.0)
    # the cell projection is only approximately a semigroup, and each entry carries ~0.01 noise
    np.testing.assert_allclose(m1.matrix @ m1.matrix, m2.matrix, atol=0.05)
    # flat periodic dynamics: rows are shifts of one another up to sampling noise
    shifted = np.array([np.roll(m2.matrix[i], -i) for i in range(8)])
    np.testing.assert_allclose(shifted - shifted.mean(axis=0), 0.0, atol=0.04)


def test_ulam_argument_checks():
    with pytest.raises(ValueError):
        ulam_estimate(flat_potential(1), SdeConfig(), 2, 100, 0)
    with pytest.raises(ValueError):
        leading_spectrum(UlamModel.from_matrix(np.eye(3), np.ones(3) / 3), 4)


def test_csv_outputs(tmp_path):
    ch = random_reversible_chain(5, 0)
    m = UlamModel.from_matrix(ch.P, ch.pi, lag=0.1)
    s = leading_spectrum(m, 3)
    spectrum_to_csv(s, tmp_path / "s.csv")
    eigenvectors_to_csv(m, s, tmp_path / "v.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "index,eigenvalue,implied_rate"
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "cell,c_1,v_0,v_1,v_2" and len(lines) == 6
