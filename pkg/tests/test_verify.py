import pytest

from detecty.verify import COLUMNS, VerifySuite
from tensormod.errors import InvalidConfig

CHEAP = ["eps_antisymmetry", "eps_contraction", "uncurl", "polynomial_fit", "green", "taylor_slope"]


@pytest.fixture
def suite(cube_spec, cube_thetas):
    def make(inject=None):
        s = VerifySuite(inject=inject, seed=3)
        s.spec = cube_spec
        s.thetas = cube_thetas
        return s
    return make


def test_identity_checks_pass():
    table = VerifySuite(seed=1).run(only=CHEAP)
    assert list(table.columns) == COLUMNS
    assert len(table) == 8
    assert table["passed"].all(), table.to_string()


def test_unknown_injection():
    with pytest.raises(InvalidConfig):
        VerifySuite(inject="gauge")


def test_assembly_checks_pass_on_fixture(suite):
    table = suite().run(only=["a_skew", "reduction_chain", "mpt_paths", "alternation", "mpt_symmetry", "gauge",
                              "curl_cancellation", "flux"])
    assert table["passed"].all(), table.to_string()


def test_sign_injection_is_caught(suite):
    table = suite("sign").run(only=["alternation"]).set_index("check")
    assert not table.loc["m_alternation", "passed"]


def test_epsilon_injection_is_caught(suite):
    table = suite("epsilon").run(only=["reduction_chain", "eps_antisymmetry"]).set_index("check")
    assert not table.loc["reduction_chain", "passed"]
    assert table.loc["eps_antisymmetry", "passed"]


@pytest.mark.slow
def test_full_suite_passes():
    table = VerifySuite().run()
    assert table["passed"].all(), table.to_string()
