import numpy as np
import pytest

from phaseless import slice_geometry, standard_phantom, two_bumps_phantom, zero_phantom


@pytest.fixture(scope="session")
def q_std():
    return standard_phantom()


@pytest.fixture(scope="session")
def q_two():
    return two_bumps_phantom()


@pytest.fixture(scope="session")
def q_zero():
    return zero_phantom()


@pytest.fixture(scope="session")
def eq_slice():
    return slice_geometry(1.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gauss_chord_integral(q, x, x0, n=400):
    """Composite Gauss-Legendre on 50 equal panels; independent of the bump splitting."""
    nodes, weights = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, 1.0, n // 8 + 1)
    z = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * nodes).ravel()
    w = (0.5 * np.diff(edges)[:, None] * weights).ravel()
    x, x0 = np.asarray(x, float), np.asarray(x0, float)
    pts = x0 + z[:, None] * (x - x0)
    return float(np.sum(w * q(pts)) * np.linalg.norm(x - x0))
