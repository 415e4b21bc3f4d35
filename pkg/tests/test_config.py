import pytest

from detecty.config import CACHE_ENV, DEFAULT_CACHE, RunConfig, build_config, read_config_file
from tensormod.errors import InvalidConfig, ParseError


def test_defaults():
    cfg = build_config(env={})
    assert cfg.order == 1 and cfg.alpha == 0.01
    assert cfg.cache_dir == DEFAULT_CACHE
    assert cfg.solver.krylov == "gmres"


def test_layering(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# object\nalpha = 0.02\norder = 2\ncache-dir = from-file\nrfar = 8\n")
    file_values = read_config_file(path)
    assert file_values == {"alpha": 0.02, "order": 2, "cache_dir": "from-file", "rfar": 8.0}

    cfg = build_config(file_values, {"order": 3, "sigma": None}, env={CACHE_ENV: "from-env"})
    assert cfg.alpha == 0.02
    assert cfg.order == 3
    assert cfg.sigma == 0.0
    assert cfg.cache_dir == "from-env"
    assert cfg.solver.r_far == 8.0

    cfg = build_config(file_values, {"cache_dir": "from-flag"}, env={CACHE_ENV: "from-env"})
    assert cfg.cache_dir == "from-flag"


def test_parse_errors(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("alpha = 0.02\norder two\n")
    with pytest.raises(ParseError) as err:
        read_config_file(path)
    assert err.value.line == 2

    path.write_text("alpha = 0.02\n\ncolour = red\n")
    with pytest.raises(ParseError) as err:
        read_config_file(path)
    assert err.value.line == 3

    path.write_text("order = 1.5\n")
    with pytest.raises(ParseError):
        read_config_file(path)


def test_invalid_values():
    with pytest.raises(InvalidConfig):
        build_config({"alpha": -1.0}, env={})
    with pytest.raises(InvalidConfig):
        build_config({"order": 9}, env={})
    with pytest.raises(InvalidConfig):
        build_config({"krylov": "cg"}, env={})
    with pytest.raises(InvalidConfig):
        build_config({"colour": "red"}, env={})
    with pytest.raises(InvalidConfig):
        RunConfig(omega=-1.0)


def test_config_hash():
    base = build_config(env={})
    assert base.config_hash == build_config(env={}).config_hash
    assert build_config({"alpha": 0.02}, env={}).config_hash != base.config_hash
    assert build_config({"tol": 1e-10}, env={}).config_hash != base.config_hash
