from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib.ticker import ScalarFormatter


class PlotUtils:
    @staticmethod
    def log_scale(ax: plt.Axes, axis: str, base: int = 10) -> None:
        if axis == "x":
            ax.set_xscale("log", base=base)
            ax.xaxis.set_major_formatter(ScalarFormatter(useOffset=False))
        elif axis == "y":
            ax.set_yscale("log", base=base)
        else:
            raise ValueError("The 'axis' param only accepts 'x' or 'y'")

    @staticmethod
    def png(fig: plt.Figure, path: str, dpi: int = 300):
        fig.savefig(path, format="png", dpi=dpi, bbox_inches="tight")

    @staticmethod
    def study(df: pd.DataFrame, ax: Optional[plt.Axes] = None, **kwargs) -> plt.Axes:
        """Error against alpha on log-log axes, one line per expansion order M,
        with a reference line of the expected slope 3 + M through the last point.
        """
        kws = {"col_alpha": "alpha", "col_err": "abs_err", "col_order": "M", "reference": True,
               "colors": ("cornflowerblue", "indianred", "seagreen", "darkorange")}
        for _k, _v in kwargs.items():
            if _k not in kws.keys():
                raise ValueError(f"Invalid kwargs '{_k}'. Accepted kwargs are {[_x for _x in kws.keys()]}")
            kws[_k] = _v

        if ax is None:
            _, ax = plt.subplots(figsize=(4, 3.5))

        for n, (order, group) in enumerate(df.groupby(kws["col_order"], sort=True)):
            color = kws["colors"][n % len(kws["colors"])]
            group = group.sort_values(kws["col_alpha"])
            alpha = group[kws["col_alpha"]].to_numpy()
            err = group[kws["col_err"]].to_numpy()
            ax.plot(alpha, err, marker="o", markersize=4, linewidth=1, color=color, label=f"M = {order}")
            if kws["reference"] and len(alpha) > 1:
                ref = err[-1] * (alpha / alpha[-1]) ** (3 + order)
                ax.plot(alpha, ref, linestyle=":", linewidth=0.9, color=color, alpha=0.7)

        PlotUtils.log_scale(ax, "x")
        PlotUtils.log_scale(ax, "y")
        ax.set_xlabel("alpha")
        ax.set_ylabel("|oracle - expansion|")
        ax.legend(frameon=False, fontsize=8)
        return ax


def study_png(df: pd.DataFrame, path: str, dpi: int = 150) -> None:
    ax = PlotUtils.study(df)
    PlotUtils.png(ax.figure, path, dpi=dpi)
    plt.close(ax.figure)
