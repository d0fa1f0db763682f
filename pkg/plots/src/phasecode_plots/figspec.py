"""Figure specification: which CSVs go into which figure."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FIGURE_IDS = ("fig3b", "fig3c", "fig4b", "fig4d")

SWEEP_COLUMNS = ("x", "fidelity", "stderr", "p_syn0", "p_syn1", "p_syn2",
                 "p_syn3", "trials")
CURVE_COLUMNS = ("x", "y")


class SpecError(ValueError):
    """Malformed figure specification or input data."""


@dataclass(frozen=True)
class Series:
    path: str
    label: str
    role: str | None = None


@dataclass(frozen=True)
class FigureSpec:
    """One figure: an id, input series with labels, optional analytic
    overlay curves, and the output image stem (.png and .svg are added)."""

    figure: str
    series: tuple[Series, ...]
    curves: tuple[Series, ...] = ()
    output: str = "figure"

    def __post_init__(self):
        if self.figure not in FIGURE_IDS:
            raise SpecError(f"unknown figure id {self.figure!r}; "
                            f"expected one of {FIGURE_IDS}")
        if not self.series:
            raise SpecError("figure needs at least one input series")

    @classmethod
    def from_file(cls, path: str) -> "FigureSpec":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "FigureSpec":
        try:
            series = tuple(Series(path=s["path"], label=s["label"],
                                  role=s.get("role")) for s in data["series"])
        except (KeyError, TypeError) as exc:
            raise SpecError(f"each series needs 'path' and 'label': {exc}")
        curves = tuple(Series(path=c["path"], label=c.get("label", ""))
                       for c in data.get("curves", ()))
        return cls(figure=data.get("figure", ""), series=series,
                   curves=curves, output=data.get("output", "figure"))


def read_csv(path: str, required: tuple[str, ...]) -> dict:
    """Read a CSV into column arrays, checking the required columns exist."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise SpecError(f"{path}: empty file")
    header = lines[0].split(",")
    for column in required:
        if column not in header:
            raise SpecError(f"{path}: missing column {column!r}")
    rows = [line.split(",") for line in lines[1:]]
    if not rows:
        raise SpecError(f"{path}: no data rows")
    out = {}
    for column in required:
        idx = header.index(column)
        try:
            out[column] = [float(r[idx]) for r in rows]
        except (ValueError, IndexError) as exc:
            raise SpecError(f"{path}: bad value in column {column!r}: {exc}")
    return out
