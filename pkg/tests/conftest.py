from math import sqrt

import numpy as np
import pytest
from click.testing import CliRunner

from nematic import create_solver
from nematic.mesh import build_mesh
from nematic.radial import RadialProfile
from nematic.tensors import MaterialParams


@pytest.fixture(scope="session")
def settings():
    return create_solver("testing")


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def params():
    return MaterialParams(a2=1.0, b2=0.0, c2=1.0, L=1.0, M=0.0, k=2, R=3.0)


@pytest.fixture(scope="session")
def small_mesh():
    return build_mesh(1.0, 0.25)


@pytest.fixture(scope="session")
def disk_mesh():
    return build_mesh(3.0, 0.15)


def quadratic_profile(params: MaterialParams, N: int) -> RadialProfile:
    """w0 = -s (r/R)^2 / sqrt(6), w1 = s (r/R)^2 / sqrt(2): smooth and admissible for k=2."""
    s = params.s_plus
    r = np.linspace(0.0, params.R, N + 1)
    x = (r / params.R) ** 2
    w = np.zeros((5, N + 1))
    w[0] = -s / sqrt(6.0) * x
    w[1] = s / sqrt(2.0) * x
    return RadialProfile(r, w, params)


def random_traceless(rng: np.random.Generator, size: int) -> np.ndarray:
    m = rng.standard_normal((size, 3, 3))
    m = 0.5 * (m + np.swapaxes(m, 1, 2))
    return m - np.trace(m, axis1=1, axis2=2)[:, None, None] * np.eye(3) / 3.0
