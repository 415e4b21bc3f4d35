import numpy as np
import pytest

from detecty.verify import material
from eddymod.fixtures import cube_mesh
from eddymod.gmpt import assemble_from_thetas
from eddymod.mesh import MU0, ObjectSpec
from eddymod.transmission import SolveConfig, solve_batch
from tensormod.polyfield import PolyField


@pytest.fixture(scope="session")
def solve_cfg():
    return SolveConfig()


@pytest.fixture(scope="session")
def cube():
    """Unit cube split into 24-tet cells, octahedrally symmetric"""
    return cube_mesh(cells=1, outer_cells=2)


@pytest.fixture(scope="session")
def cube_spec(cube):
    return ObjectSpec(cube, **material())


@pytest.fixture(scope="session")
def static_spec(cube):
    return ObjectSpec(cube, alpha=0.01, mu_star=2.0 * MU0)


@pytest.fixture(scope="session")
def cube_thetas(cube_spec, solve_cfg):
    return solve_batch(cube_spec, 2, solve_cfg)


@pytest.fixture(scope="session")
def cube_gset(cube_thetas, cube_spec, solve_cfg):
    return assemble_from_thetas(cube_thetas, cube_spec, 2, solve_cfg)


@pytest.fixture
def linear_field():
    """Divergence- and curl-free H0 = e3 + S (x - z), S symmetric and trace-free"""
    grad = np.array([[0.5, 0.2, 0.0], [0.2, -0.3, 0.1], [0.0, 0.1, -0.2]])
    return PolyField((np.array([0.0, 0.0, 1.0]), grad))


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def offset_spec(cube):
    """Cube moved off the expansion origin, so the rank-3 blocks do not vanish"""
    shifted = cube.with_vertices(cube.vertices + np.array([0.35, -0.2, 0.15]))
    return ObjectSpec(shifted, **material())


@pytest.fixture(scope="session")
def offset_thetas(offset_spec, solve_cfg):
    return solve_batch(offset_spec, 1, solve_cfg)


@pytest.fixture(scope="session")
def offset_gset(offset_thetas, offset_spec, solve_cfg):
    return assemble_from_thetas(offset_thetas, offset_spec, 2, solve_cfg)
