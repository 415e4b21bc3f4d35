import numpy as np
import pytest

from eddymod.forward import (convergence_study, default_points, eval_expansion, eval_expansion_via_A, eval_mpt,
                             fit_slope, flux_report, oracle_field, scaled_family, scattered_dipole, voltage)
from eddymod.gmpt import GmptSet
from eddymod.transmission import superpose_adelta
from tensormod.errors import InputError, OrderExceeded, PointTooClose
from tensormod.polyfield import BackgroundModel, PolyField
from tensormod.tensorcore import DenseTensor

X = np.array([0.3, 0.2, 0.5])


def test_order_one_is_rank_two_formula(cube_gset):
    H0 = PolyField.uniform([0.0, 0.0, 1.0], degree=1)
    res = eval_expansion(cube_gset, H0, X, 1)
    np.testing.assert_allclose(res.H, eval_mpt(cube_gset.mpt(), [0.0, 0.0, 1.0], X, np.zeros(3)), rtol=1e-12)
    assert list(res.terms) == [(0, 0)]


def test_terms_and_orders(cube_gset, linear_field):
    res = eval_expansion(cube_gset, linear_field, X)
    assert res.order == 2
    assert sorted(res.terms) == GmptSet.labels(2)
    np.testing.assert_allclose(res.H, sum(res.terms.values()))
    np.testing.assert_allclose(res.by_m(0), res.terms[(0, 0)] + res.terms[(0, 1)])
    with pytest.raises(OrderExceeded):
        eval_expansion(cube_gset, linear_field, X, 3)
    with pytest.raises(OrderExceeded):
        eval_expansion(cube_gset, linear_field, X, 0)


@pytest.mark.parametrize("name", ["cube", "offset"])
def test_expansion_via_a_matches(request, name, linear_field):
    gset, thetas, spec = (request.getfixturevalue(f"{name}_{part}") for part in ("gset", "thetas", "spec"))
    direct = eval_expansion(gset, linear_field, X, 2).H
    via = eval_expansion_via_A(thetas, spec, linear_field, X, 2).H
    np.testing.assert_allclose(via, direct, rtol=1e-10, atol=1e-10 * np.abs(direct).max())


def test_voltage_reciprocity():
    M = DenseTensor(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]]) * (1 + 0.1j))
    x, y, z = np.array([0.5, 0.1, 0.4]), np.array([-0.3, 0.2, 0.6]), np.zeros(3)
    m_m, m_e = np.array([0.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.5])
    assert voltage(m_m, x, m_e, y, z, M) == pytest.approx(voltage(m_e, y, m_m, x, z, M), rel=1e-12)
    assert voltage(np.zeros(3), x, m_e, y, z, M) == 0j


def test_scattered_dipole():
    M = DenseTensor(np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(scattered_dipole(M, [1.0, 1.0, 1.0]), [1.0, 2.0, 3.0])


def test_oracle_exclusion(cube_spec, cube_thetas, linear_field):
    adelta = superpose_adelta(cube_thetas, linear_field, cube_spec, 1)
    with pytest.raises(PointTooClose):
        oracle_field(adelta, cube_spec, cube_spec.z + 0.001)


def test_expansion_approaches_oracle(cube_spec, cube_thetas, cube_gset, linear_field):
    adelta = superpose_adelta(cube_thetas, linear_field, cube_spec, 1)
    x = np.array([0.3, 0.0, 0.4])
    oracle = oracle_field(adelta, cube_spec, x)
    err = [np.linalg.norm(oracle - eval_expansion(cube_gset, linear_field, x, M).H) for M in (1, 2)]
    assert err[0] < 0.2 * np.linalg.norm(oracle)
    assert err[1] < err[0]


def test_fit_slope_of_power_law():
    alphas = np.geomspace(0.01, 0.08, 4)
    slope, se = fit_slope(alphas, 3.0 * alphas ** 4)
    assert slope == pytest.approx(4.0, abs=1e-10)
    assert se == pytest.approx(0.0, abs=1e-8)


def test_scaled_family_keeps_nu(cube_spec):
    member = scaled_family(cube_spec, 0.04)
    assert member.alpha == 0.04
    assert member.nu == pytest.approx(cube_spec.nu, rel=1e-12)


def test_default_points(offset_spec):
    pts = default_points(offset_spec, [0.01, 0.02])
    assert pts.shape == (6, 3)
    np.testing.assert_allclose(np.linalg.norm(pts - offset_spec.z, axis=1), 5.0 * 0.02 * offset_spec.mesh.diameter)
    assert offset_spec.mesh.diameter == pytest.approx(np.sqrt(3.0))


def test_flux_report(cube_thetas):
    table = flux_report(cube_thetas)
    assert list(table.columns) == ["index", "flux", "relative"]
    assert len(table) == len(cube_thetas)
    assert (table["relative"] >= 0).all()


def test_convergence_study_table(cube_spec, cube_thetas, linear_field):
    table = convergence_study(cube_spec, BackgroundModel.polynomial(linear_field), [0.01, 0.02, 0.04], [1, 2],
                              thetas=cube_thetas)
    assert list(table.columns) == ["alpha", "M", "abs_err", "rel_err", "slope"]
    assert len(table) == 6
    assert (table["abs_err"] > 0).all()
    slopes = table.dropna(subset=["slope"])
    assert sorted(slopes["M"]) == [1, 2]
    assert np.isfinite(slopes["slope"]).all()
    with pytest.raises(InputError):
        convergence_study(cube_spec, BackgroundModel.polynomial(linear_field), [], [1], thetas=cube_thetas)


def test_rank_three_terms_follow_symmetry(cube_gset, offset_gset, linear_field):
    centred = eval_expansion(cube_gset, linear_field, X, 2)
    offset = eval_expansion(offset_gset, linear_field, X, 2)
    for label in [(0, 1), (1, 0)]:
        assert np.linalg.norm(centred.terms[label]) < 1e-6 * np.linalg.norm(centred.terms[(0, 0)])
        assert np.linalg.norm(offset.terms[label]) > 1e-4 * np.linalg.norm(offset.terms[(0, 0)])


@pytest.mark.parametrize("name", ["cube", "offset"])
def test_expansion_within_one_percent_at_default_points(request, name, linear_field):
    gset, thetas, spec = (request.getfixturevalue(f"{name}_{part}") for part in ("gset", "thetas", "spec"))
    adelta = superpose_adelta(thetas, linear_field, spec, 1)
    for x in default_points(spec, [spec.alpha]):
        oracle = oracle_field(adelta, spec, x)
        approx = eval_expansion(gset, linear_field, x, 2).H
        assert np.linalg.norm(oracle - approx) < 0.01 * np.linalg.norm(oracle)


def test_convergence_slopes_off_centre(offset_spec, offset_thetas, linear_field):
    table = convergence_study(offset_spec, BackgroundModel.polynomial(linear_field), [0.01, 0.02, 0.04], [1, 2],
                              thetas=offset_thetas)
    slopes = table.dropna(subset=["slope"]).set_index("M")["slope"]
    assert slopes[1] == pytest.approx(4.0, abs=0.4)
    assert slopes[2] == pytest.approx(5.0, abs=0.4)
