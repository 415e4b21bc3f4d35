import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tensormod.errors import NonOrthogonal, SlotOutOfRange
from tensormod.tensorcore import (LEVI_CIVITA, DenseTensor, MultiIndex, alternating, contract_skew,
                                  enumerate_multiindices, expand_skew, monomial, monomials, skew_deviation,
                                  transform)


@pytest.mark.parametrize("ijk, expected", [((1, 2, 3), 1), ((2, 3, 1), 1), ((2, 1, 3), -1), ((3, 2, 1), -1),
                                           ((1, 1, 2), 0), ((3, 3, 3), 0)])
def test_alternating(ijk, expected):
    assert alternating(*ijk) == expected


def test_levi_civita_is_read_only():
    with pytest.raises(ValueError):
        LEVI_CIVITA[0, 1, 2] = 2.0


def test_multiindex_labels():
    J = MultiIndex((2, 1, 3))
    assert J.offsets == (1, 0, 2)
    assert J.head == 2
    assert J.tail == MultiIndex((1, 3))
    assert J.counts() == (1, 1, 1)
    assert MultiIndex.parse(J.label()) == J
    assert MultiIndex.parse("0") == MultiIndex(())
    with pytest.raises(SlotOutOfRange):
        MultiIndex((1, 4))


def test_monomial():
    assert monomial((2.0, 3.0, 5.0), (1, 1, 3)) == pytest.approx(20.0)
    assert monomial((2.0, 3.0, 5.0), ()) == 1.0
    pts = np.array([[2.0, 3.0, 5.0], [1.0, -1.0, 2.0]])
    np.testing.assert_allclose(monomials(pts, (2, 3)), [15.0, -2.0])


def test_enumerate_multiindices_is_lexicographic():
    out = enumerate_multiindices(2)
    assert len(out) == 9
    assert out[0] == (1, 1) and out[1] == (1, 2) and out[-1] == (3, 3)
    assert enumerate_multiindices(0) == [MultiIndex(())]
    with pytest.raises(SlotOutOfRange):
        enumerate_multiindices(-1)


def test_dense_tensor_shape_and_access():
    T = DenseTensor(np.arange(27).reshape(3, 3, 3))
    assert T.rank == 3
    assert T[(1, 2, 3)] == 5
    with pytest.raises(SlotOutOfRange):
        DenseTensor(np.zeros((3, 2)))
    with pytest.raises(SlotOutOfRange):
        T[(1, 2)]
    with pytest.raises(ValueError):
        T.data[0, 0, 0] = 1.0
    assert DenseTensor(np.arange(9), rank=2)[(2, 1)] == 3


def test_dense_tensor_json():
    T = DenseTensor(np.arange(9).reshape(3, 3) * (1 + 2j))
    assert DenseTensor.from_json(T.to_json()).allclose(T)


def test_symmetrize():
    rng = np.random.default_rng(0)
    S = DenseTensor(rng.standard_normal((3, 3, 3))).symmetrize([1, 2])
    np.testing.assert_allclose(S.data, np.swapaxes(S.data, 1, 2))


def test_transform_rank2_is_conjugation():
    rng = np.random.default_rng(1)
    Q = Rotation.random(random_state=3).as_matrix()
    T = DenseTensor(rng.standard_normal((3, 3)))
    np.testing.assert_allclose(transform(T, Q).data, Q @ T.data @ Q.T, atol=1e-13)
    assert transform(T, np.eye(3)).allclose(T)


def test_transform_rejects_non_orthogonal():
    with pytest.raises(NonOrthogonal):
        transform(DenseTensor.zeros(2), np.diag([1.0, 1.0, 1.1]))
    with pytest.raises(NonOrthogonal):
        transform(DenseTensor.zeros(2), np.eye(2))


def test_transform_composes():
    rng = np.random.default_rng(2)
    Q1 = Rotation.random(random_state=4).as_matrix()
    Q2 = Rotation.random(random_state=5).as_matrix()
    T = DenseTensor(rng.standard_normal((3, 3, 3, 3)))
    np.testing.assert_allclose(transform(transform(T, Q1), Q2).data, transform(T, Q2 @ Q1).data, atol=1e-12)


def test_skew_contraction_inverts_expansion():
    rng = np.random.default_rng(3)
    v = DenseTensor(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    skew = expand_skew(v, 0)
    assert skew.rank == 3
    assert skew_deviation(skew, 0, 1) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(contract_skew(skew, 0, 1).data, v.data, atol=1e-14)


def test_contract_skew_of_cross_product():
    # a_i b_k - a_k b_i contracts to a x b
    a, b = np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 2.0])
    T = DenseTensor(np.outer(a, b) - np.outer(b, a))
    np.testing.assert_allclose(contract_skew(T, 0, 1).data, np.cross(a, b), atol=1e-14)


@pytest.mark.parametrize("rank, a, b", [(1, 0, 0), (3, 1, 1), (3, 0, 3)])
def test_contract_skew_slot_errors(rank, a, b):
    with pytest.raises(SlotOutOfRange):
        contract_skew(DenseTensor.zeros(rank), a, b)
