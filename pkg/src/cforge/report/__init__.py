"""Command-line front end, run configuration, tables and SVG figures."""

from .cli import cli
from .config import RunConfig, load_config, parse_config_text
from .figures import FigureSpec, HeatmapGrid, heatmap_grid, kde_curve, render_figure
from .tables import render_table_csv, render_table_json, table_rows

__all__ = [
    "FigureSpec",
    "HeatmapGrid",
    "RunConfig",
    "cli",
    "heatmap_grid",
    "kde_curve",
    "load_config",
    "parse_config_text",
    "render_figure",
    "render_table_csv",
    "render_table_json",
    "table_rows",
]
