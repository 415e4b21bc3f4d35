import pandas as pd
import pytest

from detecty.plotutils import PlotUtils, study_png


@pytest.fixture
def table():
    rows = [{"alpha": a, "M": M, "abs_err": a ** (3 + M)} for M in (1, 2) for a in (0.01, 0.02, 0.04)]
    return pd.DataFrame(rows)


def test_study_png(table, tmp_path):
    path = tmp_path / "study.png"
    study_png(table, str(path))
    assert path.stat().st_size > 0


def test_study_lines(table):
    ax = PlotUtils.study(table, reference=False)
    assert len(ax.get_lines()) == 2
    assert ax.get_xscale() == "log" and ax.get_yscale() == "log"


def test_invalid_options(table):
    with pytest.raises(ValueError):
        PlotUtils.study(table, colour="red")
    with pytest.raises(ValueError):
        PlotUtils.log_scale(PlotUtils.study(table).axes, "z")
