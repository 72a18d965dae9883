import subprocess
import sys

import numpy as np
import pytest

from rcv import _fallback, backend
from rcv.torus import INF, IMAGE_TERMS, TorusKernelSpec, WrappedNormalParams

compiled = pytest.importorskip("rcv._kernels")


@pytest.mark.parametrize("s", [0.1, 0.3, 1.0, 4.0])
def test_wrapped_normal_agrees(s, rng):
    d = rng.uniform(-10, 10, 500)
    args = (*WrappedNormalParams(s).backend_args(), IMAGE_TERMS)
    np.testing.assert_allclose(compiled.wrapped_normal(d, *args), _fallback.wrapped_normal(d, *args),
                               rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("n,sigma", [(2, 1.0), (3, 2.0), (2, INF), (3, 0.2)])
def test_torus_kernel_and_pairs_agree(n, sigma, rng):
    spec = TorusKernelSpec(n, 0.7, sigma)
    x = rng.uniform(-np.pi, np.pi, (40, n))
    y = rng.uniform(-np.pi, np.pi, (40, n))
    args = spec._args()
    np.testing.assert_allclose(compiled.torus_kernel(x, y, *args), _fallback.torus_kernel(x, y, *args),
                               rtol=1e-12, atol=1e-15)
    y1 = rng.uniform(-np.pi, np.pi, (3, 16, n))
    y2 = rng.uniform(-np.pi, np.pi, (3, 16, n))
    np.testing.assert_allclose(compiled.torus_pair_integrand(x, y1, y2, 2.5, *args),
                               _fallback.torus_pair_integrand(x, y1, y2, 2.5, *args), rtol=1e-12)


def test_kde_agrees(rng):
    pts = rng.normal(size=(300, 2))
    h = np.array([0.2, 0.5])
    q = rng.normal(size=(100, 2))
    np.testing.assert_allclose(compiled.kde_eval(pts, h, q), _fallback.kde_eval(pts, h, q), rtol=1e-12)


def test_env_forces_fallback():
    out = subprocess.run([sys.executable, "-c", "from rcv import backend; print(backend.NAME)"],
                         env={"RCV_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert backend.NAME in ("cython", "python")
