"""Deterministic SVG figures: trajectories, embedding map, densities, heatmap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import gaussian_kde

from ..errors import DataError, EmptyInputError

KINDS = ("trajectory", "embedding_map", "density", "heatmap")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 150, "top": 40, "bottom": 55}
EMPTY_FILL = "#d9d9d9"


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    series: tuple[str, ...]
    x_label: str = ""
    y_label: str = ""
    title: str = ""
    bins: tuple[int, int] = (5, 5)
    grid_points: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown figure kind {self.kind!r}")
        if not self.series:
            raise DataError("figure needs at least one series")
        if self.kind == "heatmap" and min(self.bins) < 2:
            raise DataError("heatmap grid must be at least 2 x 2")


# ------------------------------------------------------------ heatmap grid


@dataclass
class HeatmapGrid:
    means: np.ndarray  # bins_i x bins_c, nan where empty
    counts: np.ndarray
    edges_i: np.ndarray
    edges_c: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0


def _edges(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, edges.size - 2)


def heatmap_grid(records, bins_i: int, bins_c: int) -> HeatmapGrid:
    """Mean delta per equal-width (I, C) cell; empty cells hold nan and count 0."""
    if bins_i < 2 or bins_c < 2:
        raise DataError("heatmap needs at least two bins per axis")
    x = np.asarray(records, dtype=float).reshape(-1, 3) if len(records) else np.empty((0, 3))
    if x.shape[0] == 0:
        raise EmptyInputError("heatmap needs at least one record")
    ei, ec = _edges(x[:, 0], bins_i), _edges(x[:, 1], bins_c)
    ii, cc = _bin_index(x[:, 0], ei), _bin_index(x[:, 1], ec)
    counts = np.zeros((bins_i, bins_c), dtype=int)
    sums = np.zeros((bins_i, bins_c))
    np.add.at(counts, (ii, cc), 1)
    np.add.at(sums, (ii, cc), x[:, 2])
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return HeatmapGrid(means, counts, ei, ec)


# ------------------------------------------------------------ primitives


def kde_curve(sample, grid) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth, evaluated on ``grid``."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2 or np.ptp(x) == 0:
        raise DataError("density needs at least two distinct values")
    return gaussian_kde(x, bw_method="silverman")(np.asarray(grid, dtype=float))


def _n(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


class _Canvas:
    def __init__(self, spec: FigureSpec, xr, yr):
        self.spec = spec
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.parts: list[str] = []

    def px(self, x: float) -> float:
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y: float) -> float:
        return MARGIN["top"] + (1.0 - (y - self.y0) / (self.y1 - self.y0)) * self.ph

    def add(self, s: str) -> None:
        self.parts.append(s)

    def axes(self) -> None:
        left, top = MARGIN["left"], MARGIN["top"]
        bottom = top + self.ph
        self.add(
            f'<rect x="{left}" y="{top}" width="{self.pw}" height="{self.ph}" fill="none" stroke="#000000"/>'
        )
        for k in range(5):
            xv = self.x0 + k * (self.x1 - self.x0) / 4
            yv = self.y0 + k * (self.y1 - self.y0) / 4
            x, y = self.px(xv), self.py(yv)
            self.add(f'<line x1="{_n(x)}" y1="{bottom}" x2="{_n(x)}" y2="{bottom + 5}" stroke="#000000"/>')
            self.add(
                f'<text x="{_n(x)}" y="{bottom + 18}" font-size="11" text-anchor="middle">{_tick(xv)}</text>'
            )
            self.add(f'<line x1="{left - 5}" y1="{_n(y)}" x2="{left}" y2="{_n(y)}" stroke="#000000"/>')
            self.add(
                f'<text x="{left - 8}" y="{_n(y + 4)}" font-size="11" text-anchor="end">{_tick(yv)}</text>'
            )
        s = self.spec
        self.add(
            f'<text x="{_n(left + self.pw / 2)}" y="{HEIGHT - 12}" font-size="13" '
            f'text-anchor="middle">{escape(s.x_label)}</text>'
        )
        self.add(
            f'<text x="18" y="{_n(top + self.ph / 2)}" font-size="13" text-anchor="middle" '
            f'transform="rotate(-90 18 {_n(top + self.ph / 2)})">{escape(s.y_label)}</text>'
        )
        if s.title:
            self.add(
                f'<text x="{WIDTH / 2:.2f}" y="22" font-size="15" text-anchor="middle">{escape(s.title)}</text>'
            )

    def legend(self, names: Sequence[str]) -> None:
        x = WIDTH - MARGIN["right"] + 12
        for k, name in enumerate(names):
            y = MARGIN["top"] + 10 + 18 * k
            color = PALETTE[k % len(PALETTE)]
            self.add(f'<line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            self.add(f'<text x="{x + 24}" y="{y + 4}" font-size="11">{escape(name)}</text>')

    def svg(self, extra_defs: str = "") -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        )
        defs = f"<defs>{extra_defs}</defs>\n" if extra_defs else ""
        body = '<rect width="100%" height="100%" fill="#ffffff"/>\n' + "\n".join(self.parts) + "\n"
        return head + defs + body + "</svg>\n"


def _polyline(canvas: _Canvas, xs, ys, color: str) -> str:
    pts = " ".join(f"{_n(canvas.px(x))},{_n(canvas.py(y))}" for x, y in zip(xs, ys))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def _finite_range(arrays) -> tuple[float, float]:
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise DataError("figure data has no finite values")
    return float(vals.min()), float(vals.max())


def _get(data: Mapping, name: str) -> np.ndarray:
    if name not in data:
        raise DataError(f"figure data has no series {name!r}")
    arr = np.asarray(data[name], dtype=float)
    if arr.size == 0:
        raise DataError(f"series {name!r} is empty")
    return arr


# ------------------------------------------------------------- renderers


def _trajectory(spec: FigureSpec, data: Mapping) -> str:
    series = [_get(data, n).reshape(-1, 2) for n in spec.series]
    canvas = _Canvas(spec, _finite_range([s[:, 0] for s in series]), _finite_range([s[:, 1] for s in series]))
    canvas.axes()
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        if s.shape[0] > 1:
            canvas.add(_polyline(canvas, s[:, 0], s[:, 1], color))
        else:
            canvas.add(
                f'<circle cx="{_n(canvas.px(s[0, 0]))}" cy="{_n(canvas.py(s[0, 1]))}" r="3" fill="{color}"/>'
            )
    canvas.legend(spec.series)
    return canvas.svg()


def _embedding_map(spec: FigureSpec, data: Mapping) -> str:
    """``series`` names the real and counterfactual n x 2 arrays; an optional
    ``labels`` entry names the points."""
    real = _get(data, spec.series[0]).reshape(-1, 2)
    cf = _get(data, spec.series[1]).reshape(-1, 2) if len(spec.series) > 1 else None
    if cf is not None and cf.shape != real.shape:
        raise DataError("real and counterfactual positions differ in shape")
    labels = list(data.get("labels", [])) if "labels" in data else []
    pts = [real] + ([cf] if cf is not None else [])
    canvas = _Canvas(spec, _finite_range([p[:, 0] for p in pts]), _finite_range([p[:, 1] for p in pts]))
    canvas.axes()
    marker = (
        '<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" '
        'orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#d62728"/></marker>'
    )
    for i, (x, y) in enumerate(real):
        cx, cy = canvas.px(x), canvas.py(y)
        if cf is not None:
            tx, ty = canvas.px(cf[i, 0]), canvas.py(cf[i, 1])
            canvas.add(
                f'<line x1="{_n(cx)}" y1="{_n(cy)}" x2="{_n(tx)}" y2="{_n(ty)}" stroke="#d62728" '
                f'stroke-width="1.2" marker-end="url(#arrow)"/>'
            )
        canvas.add(f'<circle cx="{_n(cx)}" cy="{_n(cy)}" r="3.5" fill="{PALETTE[0]}"/>')
        if i < len(labels):
            canvas.add(f'<text x="{_n(cx + 5)}" y="{_n(cy - 5)}" font-size="10">{escape(str(labels[i]))}</text>')
    canvas.legend(spec.series)
    return canvas.svg(marker)


def _density(spec: FigureSpec, data: Mapping) -> str:
    samples = [_get(data, n).ravel() for n in spec.series]
    lo, hi = _finite_range(samples)
    pad = 0.1 * (hi - lo) if hi > lo else 0.5
    grid = np.linspace(lo - pad, hi + pad, spec.grid_points)
    curves = [kde_curve(s, grid) for s in samples]
    canvas = _Canvas(spec, (grid[0], grid[-1]), (0.0, float(max(c.max() for c in curves)) * 1.05))
    canvas.axes()
    for k, c in enumerate(curves):
        canvas.add(_polyline(canvas, grid, c, PALETTE[k % len(PALETTE)]))
    canvas.legend(spec.series)
    return canvas.svg()


def _color(value: float, scale: float) -> str:
    t = 0.0 if scale == 0 else max(-1.0, min(1.0, value / scale))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def _heatmap(spec: FigureSpec, data: Mapping) -> str:
    grid = heatmap_grid(_get(data, spec.series[0]).reshape(-1, 3), *spec.bins)
    canvas = _Canvas(
        spec, (grid.edges_i[0], grid.edges_i[-1]), (grid.edges_c[0], grid.edges_c[-1])
    )
    finite = grid.means[~grid.empty]
    scale = float(np.max(np.abs(finite))) if finite.size else 0.0
    for a in range(grid.means.shape[0]):
        for b in range(grid.means.shape[1]):
            x0, x1 = canvas.px(grid.edges_i[a]), canvas.px(grid.edges_i[a + 1])
            y0, y1 = canvas.py(grid.edges_c[b + 1]), canvas.py(grid.edges_c[b])
            if grid.empty[a, b]:
                fill, cls = EMPTY_FILL, "empty"
            else:
                fill, cls = _color(float(grid.means[a, b]), scale), "cell"
            canvas.add(
                f'<rect class="{cls}" x="{_n(x0)}" y="{_n(y0)}" width="{_n(x1 - x0)}" height="{_n(y1 - y0)}" '
                f'fill="{fill}" stroke="#ffffff"/>'
            )
    canvas.axes()
    lx = WIDTH - MARGIN["right"] + 12
    for k, (label, value) in enumerate((("max gain", scale), ("zero", 0.0), ("max loss", -scale))):
        y = MARGIN["top"] + 10 + 18 * k
        canvas.add(f'<rect x="{lx}" y="{y - 6}" width="14" height="12" fill="{_color(value, scale)}" stroke="#000000"/>')
        canvas.add(f'<text x="{lx + 20}" y="{y + 4}" font-size="11">{label} {_tick(value)}</text>')
    y = MARGIN["top"] + 10 + 18 * 3
    canvas.add(f'<rect x="{lx}" y="{y - 6}" width="14" height="12" fill="{EMPTY_FILL}" stroke="#000000"/>')
    canvas.add(f'<text x="{lx + 20}" y="{y + 4}" font-size="11">no data</text>')
    return canvas.svg()


_RENDERERS = {
    "trajectory": _trajectory,
    "embedding_map": _embedding_map,
    "density": _density,
    "heatmap": _heatmap,
}


def render_figure(spec: FigureSpec, data: Mapping) -> str:
    """SVG 1.1 document for ``spec`` drawn from ``data`` (series name -> array).

    trajectory: each series is an n x 2 array of (x, y) points.
    embedding_map: series are the real and counterfactual n x 2 positions.
    density: each series is a 1-D sample.
    heatmap: the single series is an n x 3 array of (I, C, delta).
    """
    return _RENDERERS[spec.kind](spec, data)
