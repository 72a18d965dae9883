import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from rcv.kde import CoverageError, DegenerateDataError, GridSpec, grid_integral, kde_eval, kde_fit, l1_distance, \
    silverman_bandwidth


def test_single_point_is_gaussian():
    k = kde_fit(np.array([[0.5]]), bandwidth=0.3)
    y = np.linspace(-1, 2, 7)[:, None]
    np.testing.assert_allclose(k(y), norm.pdf(y[:, 0], 0.5, 0.3), rtol=1e-12)


def test_product_kernel_2d():
    k = kde_fit(np.array([[0.0, 0.0], [1.0, -1.0]]), bandwidth=[0.5, 2.0])
    y = np.array([0.3, 0.4])
    expected = 0.5 * (norm.pdf(0.3, 0, .5) * norm.pdf(0.4, 0, 2) + norm.pdf(0.3, 1, .5) * norm.pdf(0.4, -1, 2))
    assert kde_eval(k, y) == pytest.approx(expected, rel=1e-12)


def test_silverman_formula(rng):
    x = rng.normal(size=(500, 2)) * [1.0, 3.0]
    h = silverman_bandwidth(x)
    np.testing.assert_allclose(h, x.std(axis=0, ddof=1) * (4 / (4 * 500)) ** (1 / 6))


def test_degenerate_axis_needs_bandwidth():
    pts = np.column_stack([np.linspace(0, 1, 10), np.zeros(10)])
    with pytest.raises(DegenerateDataError):
        kde_fit(pts)
    assert kde_fit(pts, bandwidth=0.1).bandwidth.shape == (2,)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kde_fit(np.zeros((3, 2)), 0.1)(np.zeros(3))


def test_normalization(rng):
    k = kde_fit(rng.normal(size=(200, 2)))
    assert grid_integral(k, GridSpec(k.support_box(6.0), 200)) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("delta", [0.25, 1.0, 3.0])
def test_l1_two_gaussians(delta):
    a = kde_fit(np.array([[0.0]]), 1.0)
    b = kde_fit(np.array([[delta]]), 1.0)
    got = l1_distance(a, b, GridSpec(np.array([[-8.0, 8.0 + delta]]), 4000))
    assert got == pytest.approx(2 * (2 * norm.cdf(delta / 2) - 1), rel=1e-5)


def test_l1_needs_coverage():
    a = kde_fit(np.array([[0.0]]), 1.0)
    with pytest.raises(CoverageError) as info:
        l1_distance(a, a, GridSpec(np.array([[-1.0, 1.0]]), 50))
    assert info.value.suggested_box[0, 0] <= -4.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.2, 1.0))
def test_l1_metric_properties(centres, h):
    ks = [kde_fit(np.array([[c], [c + 0.3]]), h) for c in centres]
    grid = GridSpec(np.array([[-8.0, 8.0]]), 800)
    d = lambda i, j: l1_distance(ks[i], ks[j], grid)
    assert d(0, 0) == 0.0
    assert d(0, 1) == pytest.approx(d(1, 0))
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12
    assert 0.0 <= d(0, 1) <= 2.0 + 1e-9
