import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from detecty.dictionary import (DictEntry, Dictionary, Measurement, build_dictionary, classify, fit_position,
                                fit_scale, load_measurements, planted_measurement, rotation_grid)
from detecty.verify import material
from eddymod.fixtures import cube_mesh
from eddymod.gmpt import GmptSet
from eddymod.mesh import ObjectSpec
from tensormod.errors import EmptyMeasurement, FrequencyMismatch, InputError, IntegrityError
from tensormod.polyfield import BackgroundModel
from tensormod.tensorcore import DenseTensor

OMEGA = 1e4
Z = np.array([0.05, -0.02, 0.0])
H0 = BackgroundModel.uniform([0.3, 0.2, 1.0])


def entry(object_id, diag):
    gset = GmptSet(1, {(0, 0): (DenseTensor.zeros(2), DenseTensor(np.diag(diag)))})
    return DictEntry(object_id, f"hash-{object_id}", [OMEGA], [gset])


def sensors(count=8, radius=0.3):
    angle = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return np.stack([radius * np.cos(angle), radius * np.sin(angle), 0.2 + 0.05 * np.cos(3 * angle)], axis=1)


@pytest.fixture
def entries():
    return [entry("ball", [1e-6, 1e-6, 1e-6]), entry("box", [3e-6, 2e-6, 1e-6])]


@pytest.fixture
def planted(entries):
    Q = rotation_grid()[37].as_matrix()
    return planted_measurement(entries[1], OMEGA, sensors(), H0, Z, Q, z_prior=Z)


def test_rotation_grid():
    grid = rotation_grid()
    assert len(grid) == 576
    mats = grid.as_matrix()
    np.testing.assert_allclose(np.einsum("rji,rjk->rik", mats, mats), np.broadcast_to(np.eye(3), mats.shape),
                               atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(mats), 1.0)


def test_classify_ranks_planted_entry_first(entries, planted):
    ranking = classify(planted, Dictionary(entries))
    assert [r.object_id for r in ranking] == ["box", "ball"]
    assert ranking[0].residual < 1e-6 * ranking[1].residual
    assert not ranking[0].ill_posed and not ranking[0].degenerate
    Q = ranking[0].Q
    np.testing.assert_allclose(Q @ Q.T, np.eye(3), atol=1e-10)


def test_fit_recovers_position_from_offset_prior(entries, planted):
    planted.z_prior = Z + np.array([0.01, 0.0, -0.01])
    result = fit_position(planted, entries[1])
    np.testing.assert_allclose(result.z, Z, atol=1e-4)


def two_rings(count=8, radius=0.3, height=0.2):
    return np.concatenate([sensors(count, radius) * [1.0, 1.0, 0.0] + [0.0, 0.0, h] for h in (height, -height)])


def test_noisy_three_background_identification(rng):
    diameter = 0.05
    library = [entry("sphere", [2e-6, 2e-6, 2e-6]), entry("plate", [3e-6, 3e-6, 1e-6]), entry("box", [3e-6, 2e-6, 1e-6])]
    z0 = np.array([0.02, -0.01, 0.01])
    Q0 = Rotation.from_rotvec([0.4, -0.9, 0.6]).as_matrix()
    measurements = [planted_measurement(library[2], OMEGA, two_rings(), BackgroundModel.uniform(e), z0, Q0, noise=0.01,
                                        rng=rng) for e in np.eye(3)]
    ranking = classify(measurements, Dictionary(library))
    best = ranking[0]
    assert best.object_id == "box"
    flips = [np.diag(s) for s in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]
    angle = min(Rotation.from_matrix(best.Q.T @ Q0 @ D).magnitude() for D in flips)
    assert np.degrees(angle) < 5.0
    assert np.linalg.norm(best.z - z0) < 0.02 * diameter


def test_single_sensor_is_ill_posed(entries):
    meas = planted_measurement(entries[1], OMEGA, [[0.0, 0.0, 0.3]], H0, Z, np.eye(3))
    assert fit_position(meas, entries[0]).ill_posed


def test_vanishing_data_is_degenerate(entries):
    meas = Measurement(sensors(), H0, np.zeros((8, 3)), OMEGA)
    result = fit_position(meas, entries[1])
    assert result.degenerate
    np.testing.assert_allclose(result.z, meas.prior)


def test_fit_scale(entries):
    grown = entry("box", np.array([3e-6, 2e-6, 1e-6]) * 1.3 ** 3)
    meas = planted_measurement(grown, OMEGA, sensors(), H0, Z, np.eye(3))
    s, _ = fit_scale(meas, entries[1], Z, np.eye(3))
    assert s == pytest.approx(1.3, rel=1e-4)


def test_measurement_validation():
    with pytest.raises(EmptyMeasurement):
        Measurement(np.zeros((0, 3)), H0, np.zeros((0, 3)), OMEGA)
    with pytest.raises(InputError):
        Measurement(sensors(), H0, np.zeros((7, 3)), OMEGA)
    with pytest.raises(InputError):
        Measurement(sensors(), H0, np.zeros((8, 3)), OMEGA, noise=0.0)
    with pytest.raises(EmptyMeasurement):
        classify([], [entry("ball", [1.0, 1.0, 1.0])])


def test_measurement_file(planted, tmp_path):
    path = tmp_path / "meas.json"
    path.write_text(json.dumps([planted.to_json()]))
    (loaded,) = load_measurements(path)
    np.testing.assert_allclose(loaded.observed, planted.observed)
    np.testing.assert_allclose(loaded.prior, Z)
    path.write_text("[]")
    with pytest.raises(EmptyMeasurement):
        load_measurements(path)


def test_classify_input_errors(entries, planted):
    with pytest.raises(InputError):
        classify(planted, Dictionary())
    planted.omega = 2.0 * OMEGA
    with pytest.raises(FrequencyMismatch):
        classify(planted, entries)


def test_dictionary_persistence(entries, tmp_path):
    Dictionary(entries).save(tmp_path / "dict", {"version": "test"})
    loaded = Dictionary.load(tmp_path / "dict")
    assert [e.object_id for e in loaded] == ["ball", "box"]
    assert loaded.get("box").set_for(OMEGA).mpt().allclose(entries[1].sets[0].mpt())

    path = tmp_path / "dict" / "entries" / "box.json"
    path.write_text(path.read_text().replace("hash-box", "hash-xxx"))
    with pytest.raises(IntegrityError):
        Dictionary.load(tmp_path / "dict")
    path.unlink()
    with pytest.raises(IntegrityError):
        Dictionary.load(tmp_path / "dict")
    with pytest.raises(IntegrityError):
        Dictionary.load(tmp_path / "absent")


@pytest.mark.slow
def test_build_dictionary_from_cube(tmp_path):
    spec = ObjectSpec(cube_mesh(outer_cells=1), **material())
    built, failures = build_dictionary({"cube": spec}, [OMEGA, 2.0 * OMEGA], M=1)
    assert not failures
    (cube,) = built
    assert cube.frequencies == [OMEGA, 2.0 * OMEGA]
    M = cube.set_for(OMEGA).mpt().data
    np.testing.assert_allclose(M, M[0, 0] * np.eye(3), atol=1e-8 * np.abs(M).max())
    assert cube.provenance["mesh_sha256"] == spec.mesh.digest
