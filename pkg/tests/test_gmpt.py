import numpy as np
import pytest

from detecty.verify import material
from eddymod.fixtures import medium_sphere_mesh, sphere_mesh
from eddymod.gmpt import (GmptSet, assemble_A, assemble_C, assemble_C_via_A, assemble_N, assemble_from_thetas,
                          block_deviation, check_frame_equivariance, curl_cancellation, gauge_residual, mpt_from_thetas,
                          polya_szego, reduce_A_to_C, static_limit)
from eddymod.mesh import ObjectSpec
from eddymod.staticlimit import polya_szego_tensor
from tensormod.errors import InputError, MissingIndex, NotSkew, OrderExceeded
from tensormod.tensorcore import DenseTensor, skew_deviation

BLOCKS = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]


def test_block_ranks(cube_thetas, cube_spec):
    for m, p in BLOCKS:
        assert assemble_C(cube_thetas, cube_spec, m, p).rank == 2 + m + p
        assert assemble_N(cube_thetas, cube_spec, m, p).rank == 2 + m + p
        assert assemble_A(cube_thetas, cube_spec, m, p).rank == 4 + m + p


def test_mpt_is_symmetric_multiple_of_identity(cube_gset):
    M = cube_gset.mpt().data
    scale = np.abs(M).max()
    np.testing.assert_allclose(M, M.T, atol=1e-8 * scale)
    np.testing.assert_allclose(M, M[0, 0] * np.eye(3), atol=1e-8 * scale)
    assert M[0, 0].real > 0


def test_mpt_paths_agree(cube_gset, cube_thetas, cube_spec):
    assert block_deviation(cube_gset.mpt(0, 0), mpt_from_thetas(cube_thetas, cube_spec)) < 1e-12


@pytest.mark.parametrize("m, p", BLOCKS)
def test_a_is_skew_and_reduces_to_c(cube_thetas, cube_spec, m, p):
    A = assemble_A(cube_thetas, cube_spec, m, p)
    assert skew_deviation(A, 0, 2) < 1e-12
    via = assemble_C_via_A(cube_thetas, cube_spec, m, p)
    assert block_deviation(via, assemble_C(cube_thetas, cube_spec, m, p)) < 1e-10


def test_reduce_rejects_non_skew():
    with pytest.raises(NotSkew):
        reduce_A_to_C(DenseTensor(np.ones((3, 3, 3, 3))))
    with pytest.raises(NotSkew):
        reduce_A_to_C(DenseTensor.zeros(3))
    assert reduce_A_to_C(DenseTensor.zeros(4)).rank == 2


@pytest.mark.parametrize("m", [1, 2])
def test_sign_alternates_with_m(cube_thetas, cube_spec, m):
    for assemble in (assemble_C, assemble_N):
        produced = assemble(cube_thetas, cube_spec, m, 0)
        unsigned = assemble(cube_thetas, cube_spec, m, 0, 1)
        assert block_deviation(produced, unsigned * (-1) ** m) == 0.0


def test_missing_theta_order(cube_thetas, cube_spec):
    first = {J: t for J, t in cube_thetas.items() if len(J) == 1}
    with pytest.raises(MissingIndex):
        assemble_C(first, cube_spec, 0, 1)
    with pytest.raises(MissingIndex):
        assemble_from_thetas(first, cube_spec, 2)


def test_alpha_scaling_at_fixed_nu(cube_thetas, cube_spec, cube_gset):
    scaled_spec = cube_spec.replace(alpha=2.0 * cube_spec.alpha, sigma=cube_spec.sigma / 4.0)
    scaled = assemble_from_thetas(cube_thetas, scaled_spec, 2)
    for m, p in GmptSet.labels(2):
        expected = cube_gset.mpt(m, p) * 2.0 ** (3 + m + p)
        assert block_deviation(scaled.mpt(m, p), expected) < 1e-12


def test_no_eddy_currents_without_conductivity(cube_thetas, cube_spec):
    static = cube_spec.replace(sigma=0.0)
    assert assemble_C(cube_thetas, static, 0, 1).max_abs() == 0.0
    assert assemble_N(cube_thetas, cube_spec.replace(mu_star=cube_spec.mu0), 1, 0).max_abs() == 0.0


def test_set_layout_and_json(cube_gset, tmp_path):
    assert GmptSet.labels(2) == [(0, 0), (0, 1), (1, 0)]
    assert sorted(cube_gset.blocks) == [(0, 0), (0, 1), (1, 0)]
    with pytest.raises(OrderExceeded):
        cube_gset.block(1, 1)
    path = tmp_path / "gmpt.json"
    cube_gset.save(path)
    again = GmptSet.load(path)
    assert again.order == 2 and again.meta["nu"] == pytest.approx(cube_gset.meta["nu"])
    for label in cube_gset.blocks:
        assert again.mpt(*label).allclose(cube_gset.mpt(*label))

    body = cube_gset.to_json()
    body["blocks"][0]["C"] = DenseTensor.zeros(3).to_json()
    with pytest.raises(MissingIndex):
        GmptSet.from_json(body)


def test_set_transform_by_cube_symmetry(cube_gset):
    Q = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    rotated = cube_gset.transform(Q)
    for label in cube_gset.blocks:
        assert block_deviation(rotated.mpt(*label), cube_gset.mpt(*label)) < 1e-8


def test_gauge_and_curl_cancellation(cube_thetas, cube_spec):
    for p in range(3):
        assert gauge_residual(cube_thetas, cube_spec, p) < 1e-3
    for m, p in [(0, 1), (1, 1), (0, 2), (1, 2)]:
        assert curl_cancellation(cube_spec, m, p) < 1e-12


def test_polya_szego_tensor(cube):
    T = polya_szego_tensor(cube, 2.0).data.real
    np.testing.assert_allclose(T, T.T, atol=1e-10)
    np.testing.assert_allclose(T, T[0, 0] * np.eye(3), atol=1e-8)
    # between the ball value 3 (k - 1) / (k + 2) |B| and (k - 1) |B|
    assert 0.6 < T[0, 0] < 1.0
    assert polya_szego_tensor(cube, 1.0).max_abs() == 0.0
    with pytest.raises(InputError):
        polya_szego_tensor(cube, 0.0)


def test_polya_szego_scales_with_alpha(static_spec):
    base = polya_szego_tensor(static_spec.mesh, static_spec.mu_r)
    assert polya_szego(static_spec).allclose(base * static_spec.alpha ** 3, rtol=1e-12)


@pytest.mark.slow
def test_static_limit(cube_spec):
    limit = static_limit(cube_spec)
    assert limit.deviation < 0.25


@pytest.mark.slow
def test_static_limit_converges_on_sphere():
    # interior and exterior refined together, ending at the medium reference sphere
    meshes = [sphere_mesh(cells=2, outer_cells=3, r_far_factor=3.0), sphere_mesh(cells=3, outer_cells=4, r_far_factor=3.0),
              medium_sphere_mesh()]
    deviations = [static_limit(ObjectSpec(mesh, **material())).deviation for mesh in meshes]
    assert deviations[0] > deviations[1] > deviations[2]
    assert deviations[2] <= 0.05


@pytest.mark.slow
def test_frame_equivariance(cube_spec, cube_gset):
    Q = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    report = check_frame_equivariance(cube_spec, Q, 2, reference=cube_gset)
    assert report.passed(1e-8)
