import numpy as np
import pytest

from hyperminkowski.geometry import Ambient, GraphHypersurface
from hyperminkowski.sphere_grid import build_grid


@pytest.fixture(scope="session")
def ladder():
    """16x32, 32x64, 64x128 grids."""
    return [build_grid(2, (nt, 2 * nt)) for nt in (16, 32, 64)]


@pytest.fixture(scope="session")
def grid32():
    return build_grid(2, (32, 64))


def perturbed_sphere(grid, rho0=1.0, eps=0.05):
    return GraphHypersurface(Ambient.HYPERBOLIC, rho0 + eps * np.cos(grid.theta))


def sphere(grid, rho0=1.0):
    return GraphHypersurface(Ambient.HYPERBOLIC, np.full(grid.size, rho0))


def orders(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])
