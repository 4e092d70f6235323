"""SVG figures for experiment reports.

Figures are drawn on a bare :class:`matplotlib.figure.Figure` (no pyplot
state, so rendering is safe from worker threads) and saved with a fixed
hash salt and no date stamp, which makes the bytes reproducible.
"""

from __future__ import annotations

import io
import math

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from scipy import stats

from .experiments import ExperimentReport

__all__ = ["render_svg", "STYLE"]

STYLE = {
    "svg.hashsalt": "mellinstop",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (6.0, 3.8),
}

_COLORS = ("#1b4f72", "#c0392b", "#1e8449", "#7d3c98", "#b9770e", "#566573")


def _boxplot(ax, groups, labels, ylabel):
    data = [np.asarray(g, dtype=float)[np.isfinite(g)] for g in groups]
    ax.boxplot(data, widths=0.5, medianprops={"color": _COLORS[1]}, flierprops={"markersize": 2})
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_ylabel(ylabel)


def _loss_boxplot(fig, rep: ExperimentReport):
    ax = fig.add_subplot(1, 1, 1)
    ns = rep.spec["n_list"]
    groups = [[r["loss"] for r in rep.records if r["n"] == n] for n in ns]
    _boxplot(ax, groups, [str(n) for n in ns], "sup-norm loss on the x grid")
    ax.set_xlabel("sample size n")


def _family_boxplot(fig, rep: ExperimentReport):
    ax = fig.add_subplot(1, 2, 1)
    names = list(rep.summary["by_family"])
    groups = [[r["loss"] for r in rep.records if r["family"] == name] for name in names]
    _boxplot(ax, groups, [s.replace("_", "\n") for s in names], "sup-norm loss")
    ax2 = fig.add_subplot(1, 2, 2)
    for color, (name, curve) in zip(_COLORS, rep.curves.items()):
        for est in curve["estimates"][:20]:
            ax2.plot(curve["x"], est, color=color, alpha=0.15, linewidth=0.5)
        ax2.plot(curve["x"], curve["truth"], color=color, label=name)
    ax2.set_xlabel("x")
    ax2.set_ylabel("density")
    ax2.legend(frameon=False, fontsize=7)


def _scatter_fit(ax, x, y, slope, intercept, xlabel, ylabel, label):
    ax.plot(x, y, "o", color=_COLORS[0], label="computed")
    if math.isfinite(slope):
        grid = np.linspace(min(x), max(x), 50)
        ax.plot(grid, intercept + slope * grid, "-", color=_COLORS[1], label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)


def _rate_slope(fig, rep: ExperimentReport):
    ax = fig.add_subplot(1, 1, 1)
    fit = rep.summary["fit"]
    ln_n = np.log(rep.spec["n_list"])
    ln_rmse = np.log(fit.get("rmse", [math.nan] * len(ln_n)))
    _scatter_fit(ax, ln_n, ln_rmse, fit["slope"], fit["intercept"], "ln n", "ln RMSE",
                 f"slope {fit['slope']:.3f} (theory {rep.summary['theoretical_slope']:.3f})")


def _minimax(fig, rep: ExperimentReport):
    live = [r for r in rep.records if r["status"] == "ok" and r["delta"] > 0 and r["chi2"] > 0]
    m = np.array([r["M"] for r in live])
    ax = fig.add_subplot(1, 2, 1)
    _scatter_fit(ax, m, np.log([r["chi2"] for r in live]), rep.summary.get("chi2_slope", math.nan),
                 rep.summary.get("chi2_intercept", math.nan), "M", "ln chi-square",
                 f"slope {rep.summary.get('chi2_slope', math.nan):.2f}")
    ax2 = fig.add_subplot(1, 2, 2)
    ax2.plot(m, np.log([r["sup_distance"] for r in live]), "o", color=_COLORS[0])
    ax2.set_xlabel("M")
    ax2.set_ylabel("ln sup |f1 - f0|")


def _normality(fig, rep: ExperimentReport):
    ax = fig.add_subplot(1, 1, 1)
    n = rep.spec["n_list"][-1]
    est = np.array([r["estimate"] for r in rep.records if r["n"] == n and r["repetition"] == 0], dtype=float)
    est = est[np.isfinite(est)]
    z = np.sort((est - est.mean()) / est.std(ddof=1))
    q = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
    _scatter_fit(ax, q, z, 1.0, 0.0, "standard normal quantile", "standardized estimate",
                 f"identity (n={n})")


def _oracle(fig, rep: ExperimentReport):
    ax = fig.add_subplot(1, 1, 1)
    names = list(rep.summary["max_abs_error"])
    for color, name in zip(_COLORS, names):
        rows = [r for r in rep.records if r["family"] == name and r["status"] == "ok"]
        err = np.maximum([r["abs_error"] for r in rows], 1e-18)
        ax.semilogy([r["x"] for r in rows], err, "o", color=color, label=name)
    ax.set_xlabel("x")
    ax.set_ylabel("|inverse - density|")
    ax.legend(frameon=False)


_DRAW = {
    "loss_boxplot": _loss_boxplot,
    "family_estimates": _family_boxplot,
    "rate_slope": _rate_slope,
    "minimax_decay": _minimax,
    "normality": _normality,
    "oracle_roundtrip": _oracle,
}


def render_svg(report: ExperimentReport) -> bytes:
    """The report's figure as standalone SVG bytes."""
    with matplotlib.rc_context(STYLE):
        fig = Figure()
        if report.records:
            _DRAW[report.experiment](fig, report)
        else:
            fig.add_subplot(1, 1, 1).text(0.5, 0.5, "no records", ha="center", va="center")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
