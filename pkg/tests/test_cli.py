import json

import numpy as np
import pytest

from detecty.cli import build_parser, main, study_background
from detecty.config import CACHE_ENV
from detecty.dictionary import DictEntry, Dictionary, planted_measurement
from eddymod.gmpt import GmptSet
from tensormod.errors import EXIT_INPUT, EXIT_INTEGRITY, EXIT_NUMERICAL, EXIT_OK, InputError
from tensormod.polyfield import BackgroundModel
from tensormod.tensorcore import DenseTensor

MATERIAL = ["--alpha", "0.01", "--sigma", "1e6", "--mur", "2", "--omega", "1e4"]


@pytest.fixture(autouse=True)
def no_cache_env(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


@pytest.fixture
def dictionary_dir(tmp_path):
    entries = []
    for object_id, diag in (("ball", [1e-6, 1e-6, 1e-6]), ("box", [3e-6, 2e-6, 1e-6])):
        gset = GmptSet(1, {(0, 0): (DenseTensor.zeros(2), DenseTensor(np.diag(diag)))})
        entries.append(DictEntry(object_id, object_id, [1e4], [gset]))
    Dictionary(entries).save(tmp_path / "dict")
    sensors = [[0.3, 0.0, 0.2], [0.0, 0.3, 0.2], [-0.3, 0.0, 0.2], [0.0, -0.3, 0.2]]
    meas = planted_measurement(entries[1], 1e4, sensors, BackgroundModel.uniform([0.3, 0.2, 1.0]), np.zeros(3),
                               np.eye(3), z_prior=np.zeros(3))
    (tmp_path / "meas.json").write_text(json.dumps(meas.to_json()))
    return tmp_path


def test_parser_defaults():
    args = build_parser().parse_args(["study", "--mesh", "fixture:cube", "--alphas", "0.01,0.02"])
    assert args.alphas == [0.01, 0.02] and args.orders == [1, 2] and args.background == "linear"
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--inject", "nothing"])


def test_study_background():
    assert study_background("linear").field.degree == 1
    with pytest.raises(InputError):
        study_background("coil")


def test_input_errors_exit_3(tmp_path):
    assert main(["solve", "--mesh", "fixture:torus"] + MATERIAL) == EXIT_INPUT
    assert main(["solve", "--mesh", str(tmp_path / "absent.gmptmesh")] + MATERIAL) == EXIT_INPUT
    assert main(["solve", "--config", str(tmp_path / "absent.cfg"), "--mesh", "fixture:cube"]) == EXIT_INPUT
    assert main(["solve", "--mesh", "fixture:cube", "--alpha", "-1"]) == EXIT_INPUT


def test_assemble_without_solutions_exit_2(tmp_path):
    argv = ["assemble", "--mesh", "fixture:cube", "--cache-dir", str(tmp_path / "empty"), "--out",
            str(tmp_path / "gmpt.json")] + MATERIAL
    assert main(argv) == EXIT_NUMERICAL
    assert not (tmp_path / "gmpt.json").exists()


def test_dict_match(dictionary_dir):
    out = dictionary_dir / "ranking.json"
    argv = ["dict", "match", "--dict", str(dictionary_dir / "dict"), "--measurement",
            str(dictionary_dir / "meas.json"), "--out", str(out)]
    assert main(argv) == EXIT_OK
    body = json.loads(out.read_text())
    assert [r["object_id"] for r in body["ranking"]] == ["box", "ball"]
    assert "config_hash" in body["provenance"]


def test_dict_match_tampered_exit_4(dictionary_dir):
    entry = dictionary_dir / "dict" / "entries" / "ball.json"
    entry.write_text(entry.read_text() + " ")
    argv = ["dict", "match", "--dict", str(dictionary_dir / "dict"), "--measurement",
            str(dictionary_dir / "meas.json")]
    assert main(argv) == EXIT_INTEGRITY


@pytest.mark.slow
def test_solve_then_assemble(tmp_path):
    common = ["--mesh", "fixture:cube", "--order", "2", "--cache-dir", str(tmp_path / "cache")] + MATERIAL
    assert main(["solve"] + common) == EXIT_OK
    assert json.loads((tmp_path / "cache" / "solve.json").read_text())["solutions"]
    assert main(["assemble", "--out", str(tmp_path / "gmpt.json")] + common) == EXIT_OK
    gset = GmptSet.load(tmp_path / "gmpt.json")
    assert gset.order == 2 and "config_hash" in gset.meta["provenance"]


@pytest.mark.slow
def test_verify_passes(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "report.csv")]) == EXIT_OK
    assert (tmp_path / "report.csv").read_text().startswith("# version")
