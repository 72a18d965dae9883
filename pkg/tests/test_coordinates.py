import numpy as np
import pytest

from rcv.coordinates import (
    EmptyLevelSetError, SingularityError, hausdorff_correction, linear_level_density, linear_rc, linear_rc_alpha,
    polar_rc, sample_level_set,
)
from rcv.sde import GibbsDensity, circular_potential


def test_linear_range_is_unit_interval():
    rc = linear_rc([1.0, 2.0, -1.0])
    corners = np.array(np.meshgrid(*[[-np.pi, np.pi]] * 3)).reshape(3, -1).T
    vals = rc(corners)
    assert vals.min() == pytest.approx(-1.0) and vals.max() == pytest.approx(1.0)


@pytest.mark.parametrize("w", [[1.0, 1.0], [1.0, 0.0], [1.0, 1.0, 1.0], [0.3, -0.8]])
def test_linear_level_points_on_level(w):
    rc = linear_rc(w)
    for z in (-0.7, 0.0, 0.4):
        s = sample_level_set(rc, z, 300, 1)
        np.testing.assert_allclose(rc(s.points), z, atol=1e-12)
        assert np.all(np.abs(s.points) <= np.pi)
        assert s.weights.sum() == pytest.approx(1.0)


def test_linear_level_set_uniform_centroid():
    # the section z=0 of the square by x1+x2 is the antidiagonal, centroid at the origin
    s = sample_level_set(linear_rc([1.0, 1.0]), 0.0, 20000, 3)
    assert np.abs(s.points.mean(axis=0)).max() < 0.05
    # and its first coordinate is uniform on [-pi, pi]
    assert np.std(s.points[:, 0]) == pytest.approx(2 * np.pi / np.sqrt(12), rel=0.02)


def test_level_outside_range():
    with pytest.raises(EmptyLevelSetError):
        sample_level_set(linear_rc([1.0, 1.0]), 1.5, 10, 0)


@pytest.mark.parametrize("w", [[1.0, 1.0], [1.0, 1.0, 1.0], [0.4, -1.0], [1.0, 0.0]])
def test_linear_level_density_matches_histogram(w, rng):
    rc = linear_rc(w)
    z = rc(rng.uniform(-np.pi, np.pi, (400_000, len(w))))
    hist, edges = np.histogram(z, bins=40, range=(-1, 1), density=True)
    c = 0.5 * (edges[1:] + edges[:-1])
    np.testing.assert_allclose(linear_level_density(rc, c), hist, atol=0.03)
    zz = np.linspace(-1, 1, 4001)
    assert np.trapezoid(linear_level_density(rc, zz), zz) == pytest.approx(1.0, abs=1e-3)


def test_linear_level_density_peaks():
    assert linear_level_density(linear_rc([1, 1]), 0.0) == pytest.approx(1.0)
    assert linear_level_density(linear_rc([1, 1, 1]), 0.0) == pytest.approx(1.125)


def test_alpha_rc_direction():
    rc = linear_rc_alpha(np.pi / 4)
    np.testing.assert_allclose(rc.weights, [np.sqrt(0.5)] * 2)
    with pytest.raises(ValueError):
        linear_rc_alpha(np.pi)


def test_polar_values_and_singularity():
    phi, r = polar_rc("angle"), polar_rc("radius")
    x = np.array([[0.0, 2.0], [-1.0, 0.0]])
    np.testing.assert_allclose(phi(x), [np.pi / 2, np.pi])
    np.testing.assert_allclose(r(x), [2.0, 1.0])
    with pytest.raises(SingularityError):
        phi(np.zeros((1, 2)))
    np.testing.assert_allclose(hausdorff_correction(phi, x), [2.0, 1.0])
    np.testing.assert_allclose(hausdorff_correction(r, x), [1.0, 1.0])


def test_polar_gradients_fd(rng):
    x = rng.uniform(0.5, 1.5, (20, 2)) * rng.choice([-1, 1], (20, 2))
    h = 1e-6
    for rc in (polar_rc("angle"), polar_rc("radius")):
        fd = np.stack([(rc(x + h * e) - rc(x - h * e)) / (2 * h) for e in np.eye(2)], -1)
        np.testing.assert_allclose(rc.grad(x), fd, atol=1e-6)


def test_angle_level_set_flat_density_radial_mean():
    # on a flat density the ray measure is proportional to t: mean radius 2/3 r_max
    s = sample_level_set(polar_rc("angle", 2.0), 0.7, 40000, 2, lambda y: np.ones(len(y)))
    t = np.linalg.norm(s.points, axis=1)
    np.testing.assert_allclose(np.arctan2(s.points[:, 1], s.points[:, 0]), 0.7, atol=1e-10)
    assert t.mean() == pytest.approx(4.0 / 3.0, abs=0.01)
    assert s.mass == pytest.approx(2.0, rel=1e-6)


def test_radius_level_set_on_circle():
    pi = GibbsDensity(circular_potential(10.0), 1.0)
    s = sample_level_set(polar_rc("radius"), 1.0, 20000, 5, pi)
    np.testing.assert_allclose(np.linalg.norm(s.points, axis=1), 1.0)
    # pi is largest at the five wells cos(5 phi) = -1
    phi = np.arctan2(s.points[:, 1], s.points[:, 0])
    assert np.mean(np.cos(5 * phi)) < -0.3
    with pytest.raises(EmptyLevelSetError):
        sample_level_set(polar_rc("radius"), 0.0, 10, 0, pi)


def test_polar_requires_density():
    with pytest.raises(ValueError):
        sample_level_set(polar_rc("angle"), 0.1, 10, 0)


def test_levels_midpoints():
    np.testing.assert_allclose(linear_rc([1, 1]).levels(4), [-0.75, -0.25, 0.25, 0.75])
