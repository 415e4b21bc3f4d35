import numpy as np
import pytest

from eddymod.mesh import LOCAL_EDGES
from eddymod.transmission import (CACHE_MAGIC, EdgeField, SolveConfig, cache_file, element_matrices,
                                  load_batch, moment_array, solve_adelta_direct, solve_batch, solve_theta,
                                  superpose_adelta, volume_moment, whitney, whitney_curls)
from tensormod.errors import IntegrityError, InvalidConfig, MissingIndex
from tensormod.tensorcore import MultiIndex, enumerate_multiindices

REFERENCE = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def reference_grads():
    J = np.stack([REFERENCE[1] - REFERENCE[0], REFERENCE[2] - REFERENCE[0], REFERENCE[3] - REFERENCE[0]])
    g123 = np.linalg.inv(J).T
    return np.concatenate([-g123.sum(axis=0, keepdims=True), g123])[None]


def test_solve_config_validation():
    with pytest.raises(InvalidConfig):
        SolveConfig(krylov="cg")
    with pytest.raises(InvalidConfig):
        SolveConfig(tol=0.0)
    with pytest.raises(InvalidConfig):
        SolveConfig().replace(tolerance=1e-6)
    cfg = SolveConfig()
    assert cfg.replace(epsilon=1e-7).epsilon == 1e-7
    assert cfg.replace(epsilon=1e-7).digest() != cfg.digest()
    assert cfg.replace(jobs=4).digest() == cfg.digest()


def test_whitney_tangential_moments():
    grads = reference_grads()
    bary = np.zeros((6, 4))
    for e, (a, b) in enumerate(LOCAL_EDGES):
        bary[e, [a, b]] = 0.5
    w = whitney(grads, bary)[0]                                   # (edge midpoint, basis, 3)
    tangents = REFERENCE[LOCAL_EDGES[:, 1]] - REFERENCE[LOCAL_EDGES[:, 0]]
    np.testing.assert_allclose(np.einsum("qed,qd->qe", w, tangents), np.eye(6), atol=1e-14)


def test_whitney_curls():
    grads = reference_grads()
    curls = whitney_curls(grads)[0]
    a, b = LOCAL_EDGES[0]
    np.testing.assert_allclose(curls[0], 2.0 * np.cross(grads[0, a], grads[0, b]))


def test_element_matrices(cube):
    K, M = element_matrices(cube)
    np.testing.assert_allclose(K, np.transpose(K, (0, 2, 1)), rtol=1e-12, atol=1e-12 * np.abs(K).max())
    assert np.all(np.linalg.eigvalsh(M[:50]) > 0)
    assert np.all(np.linalg.eigvalsh(K[:50]) > -1e-12 * np.abs(K[:50]).max())


def test_theta_residuals(cube_thetas):
    assert len(cube_thetas) == 3 + 9 + 27
    assert max(t.residual for t in cube_thetas.values()) < 1e-8
    assert list(cube_thetas) == [J for p in range(3) for J in enumerate_multiindices(p + 1)]


def test_theta_needs_vector_index(cube_spec):
    with pytest.raises(MissingIndex):
        solve_theta(cube_spec, ())
    with pytest.raises(MissingIndex):
        solve_batch(cube_spec, -1)


def test_theta_symmetry_under_cube_rotation(cube_thetas):
    # the octahedral cube gives equal curl moments for theta_1, theta_2, theta_3 on the diagonal
    diag = [moment_array(cube_thetas[MultiIndex((j,))], 0, "curl")[j - 1] for j in (1, 2, 3)]
    np.testing.assert_allclose(diag, diag[0], rtol=1e-8)


def test_moment_of_closed_form_source(cube):
    zero = EdgeField(cube, np.zeros(len(cube.edges)))
    e1 = lambda x: np.tile([1.0, 0.0, 0.0], (len(x), 1))
    np.testing.assert_allclose(volume_moment(zero, (1, 1), "field", source=e1).data, [1.0 / 12.0, 0.0, 0.0],
                               atol=1e-14)
    np.testing.assert_allclose(volume_moment(zero, (), "cross", source=e1).data, 0.0, atol=1e-14)
    with pytest.raises(InvalidConfig):
        moment_array(zero, 0, "divergence")


def test_superposition_matches_direct_solve(cube_spec, cube_thetas, linear_field, solve_cfg):
    summed = superpose_adelta(cube_thetas, linear_field, cube_spec, 1)
    direct = solve_adelta_direct(cube_spec, linear_field, 1, solve_cfg)
    scale = np.abs(direct.dofs).max()
    np.testing.assert_allclose(summed.dofs, direct.dofs, atol=1e-8 * scale)


def test_superposition_needs_thetas(cube_spec, cube_thetas, linear_field):
    first = {J: t for J, t in cube_thetas.items() if len(J) == 1}
    with pytest.raises(MissingIndex):
        superpose_adelta(first, linear_field, cube_spec, 1)


def test_theta_cache(cube_spec, solve_cfg, tmp_path):
    with pytest.raises(MissingIndex):
        load_batch(cube_spec, 0, solve_cfg, tmp_path)
    solved = solve_batch(cube_spec, 0, solve_cfg, tmp_path)
    path = cache_file(tmp_path, cube_spec, solve_cfg, MultiIndex((2,)))
    assert path.exists() and path.read_bytes().startswith(CACHE_MAGIC)
    loaded = load_batch(cube_spec, 0, solve_cfg, tmp_path)
    for J, theta in solved.items():
        np.testing.assert_array_equal(loaded[J].dofs, theta.dofs)

    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(IntegrityError):
        load_batch(cube_spec, 0, solve_cfg, tmp_path)
    path.write_bytes(b"NOTATHETA\n" + raw[len(CACHE_MAGIC):])
    with pytest.raises(IntegrityError):
        load_batch(cube_spec, 0, solve_cfg, tmp_path)
