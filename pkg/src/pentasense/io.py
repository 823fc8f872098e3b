"""Self-describing CSV output and a minimal SVG line plotter."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__


@dataclass
class Table:
    """A named CSV artifact: header metadata, column names and units, rows."""

    name: str
    columns: Sequence[str]
    rows: np.ndarray
    units: Sequence[str] = ()
    meta: dict = field(default_factory=dict)
    plot: bool = True

    def body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in np.atleast_2d(self.rows):
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()

    def header(self, common: dict) -> str:
        lines = [f"tool: pentasense {__version__}"]
        for k, v in {**common, **self.meta}.items():
            lines.append(f"{k}: {v}")
        if self.units:
            lines.append("units: " + ", ".join(f"{c}[{u}]" for c, u in zip(self.columns, self.units)))
        return "".join(f"# {ln}\n" for ln in lines)


def format_value(v) -> str:
    if isinstance(v, (str, bytes)):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.10g}"


def write_table(table: Table, out_dir, common: dict, svg: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{table.name}.csv"
    path.write_text(table.header(common) + table.body())
    paths = [path]
    if svg and table.plot:
        rows = np.atleast_2d(np.asarray(table.rows, float))
        svg_path = out / f"{table.name}.svg"
        svg_path.write_text(svg_plot(rows[:, 0], rows[:, 1:].T, table.columns[1:], table.columns[0], table.name))
        paths.append(svg_path)
    return paths


def read_body(path) -> str:
    """CSV body without ``#`` header lines."""
    return "".join(ln for ln in Path(path).read_text().splitlines(keepends=True) if not ln.startswith("#"))


def read_xy(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read ``x, y[, sigma]`` columns from a CSV with optional header row and comments."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("expected at least two numeric columns (x, y)")
    sigma = data[:, 2] if data.shape[1] > 2 else None
    return data[:, 0], data[:, 1], sigma


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_plot(x, ys, labels, xlabel: str = "", title: str = "", width: int = 640, height: int = 400) -> str:
    """Line plot of one or more series against ``x`` as an SVG document."""
    x = np.asarray(x, float)
    ys = np.atleast_2d(np.asarray(ys, float))
    ml, mr, mt, mb = 70, 130, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    finite = ys[np.isfinite(ys)]
    x0, x1 = float(np.nanmin(x)), float(np.nanmax(x))
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
        f'<text x="{ml}" y="{mt - 10}">{title}</text>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
    ]
    for frac in (0, 0.5, 1):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 15}" text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<text x="{ml - 5}" y="{sy(yv):.1f}" text-anchor="end">{yv:.4g}</text>')
    for k, (y, lab) in enumerate(zip(ys, labels)):
        color = _COLORS[k % len(_COLORS)]
        ok = np.isfinite(y) & np.isfinite(x)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{ml + pw + 8}" y="{mt + 14 * (k + 1)}" fill="{color}">{lab}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)
