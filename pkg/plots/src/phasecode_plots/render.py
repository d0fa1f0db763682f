"""Figure rendering.  Output is a pure function of the input files: fixed
style, no timestamps, salted SVG ids, so identical inputs give identical
bytes."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .figspec import (CURVE_COLUMNS, FigureSpec, Series, SpecError,
                      SWEEP_COLUMNS, read_csv)

_STYLE = {
    "figure.figsize": (6.0, 4.2),
    "figure.dpi": 160,
    "savefig.dpi": 160,
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "phasecode-plots",
    "legend.fontsize": 8.0,
}

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b")
_SYNDROME_LABELS = ("no error", "qubit 1", "qubit 2", "qubit 3")

_AXIS_LABELS = {
    "fig3b": ("error probability", "process fidelity"),
    "fig3c": ("error probability", "process fidelity"),
    "fig4b": ("total error probability", "average state fidelity"),
    "fig4d": ("storage time (ms)", "average state fidelity"),
}


def _plot_series(ax, spec: FigureSpec):
    data = []
    for i, series in enumerate(spec.series):
        table = read_csv(series.path, SWEEP_COLUMNS)
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        ax.errorbar(table["x"], table["fidelity"], yerr=table["stderr"],
                    fmt="o", ms=3.5, lw=1.0, capsize=2, label=series.label,
                    color=color)
        data.append((series, table))
    for curve in spec.curves:
        table = read_csv(curve.path, CURVE_COLUMNS)
        ax.plot(table["x"], table["y"], "-", lw=1.2, color="0.3",
                label=curve.label or None)
    return data


def _syndrome_inset(fig, data):
    # Prefer the series marked as the corrected run; otherwise take the
    # first one whose syndrome distribution is non-trivial.
    chosen = None
    for series, table in data:
        if series.role == "qec":
            chosen = table
            break
    if chosen is None:
        for _series, table in data:
            if any(v < 0.999 for v in table["p_syn0"]):
                chosen = table
                break
    if chosen is None:
        return
    ax = fig.add_axes((0.62, 0.55, 0.27, 0.3))
    for k in range(4):
        ax.plot(chosen["x"], chosen[f"p_syn{k}"], "o-", ms=2, lw=0.8,
                label=_SYNDROME_LABELS[k])
    ax.set_ylabel("syndrome probability", fontsize=7)
    ax.tick_params(labelsize=6)
    ax.legend(fontsize=5, loc="upper right")


def _crossover_markers(ax, data):
    """Vertical lines where the corrected series first/last beats all others."""
    qec = next((table for series, table in data if series.role == "qec"), None)
    others = [table for series, table in data if series.role != "qec"]
    if qec is None or not others:
        return
    x = np.asarray(qec["x"])
    best_other = np.max([np.interp(x, o["x"], o["fidelity"]) for o in others],
                        axis=0)
    winning = np.asarray(qec["fidelity"]) > best_other
    if not winning.any():
        return
    indices = np.where(winning)[0]
    for edge in (x[indices[0]], x[indices[-1]]):
        ax.axvline(edge, color="0.4", ls="--", lw=0.9)


def render(spec: FigureSpec) -> list[str]:
    """Render one figure spec; returns the written file paths."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        data = _plot_series(ax, spec)
        xlabel, ylabel = _AXIS_LABELS[spec.figure]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(loc="lower left")
        if spec.figure in ("fig3b", "fig3c"):
            _syndrome_inset(fig, data)
        if spec.figure == "fig4d":
            _crossover_markers(ax, data)
        written = []
        for ext, metadata in (("png", {"Software": None}),
                              ("svg", {"Date": None})):
            path = f"{spec.output}.{ext}"
            fig.savefig(path, metadata=metadata)
            written.append(path)
        plt.close(fig)
    return written
