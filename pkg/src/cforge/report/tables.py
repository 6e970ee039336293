"""Rendering EDS results as the two summary-table layouts."""

from __future__ import annotations

import csv
import json
from typing import Sequence

from ..eds import EdsResult

COUNTRY_NAMES = {
    "ESP": "Spain",
    "URY": "Uruguay",
    "CHL": "Chile",
    "PRT": "Portugal",
    "CRI": "Costa Rica",
    "GRC": "Greece",
    "FRA": "France",
    "ITA": "Italy",
    "DEU": "Germany",
    "ARG": "Argentina",
    "BRA": "Brazil",
    "PER": "Peru",
}

SUMMARY_HEADER = ("Country", "Scenario", "EDS", "Mean (Real)", "Mean (Counterfactual)", "ΔDevelopment")
VALIDATION_HEADER = SUMMARY_HEADER[:5]


def country_name(code: str) -> str:
    return COUNTRY_NAMES.get(code, code)


def _scenario_text(result: EdsResult) -> str:
    target = result.scenario.split("->", 1)[1] if "->" in result.scenario else result.scenario
    return f"{country_name(result.country)} → {target}"


def table_rows(results: Sequence[EdsResult], layout: str = "summary") -> list[list[str]]:
    """Header plus one row of display strings per result (3 decimals)."""
    if layout not in ("summary", "validation"):
        raise ValueError(f"unknown table layout {layout!r}")
    rows = [list(SUMMARY_HEADER if layout == "summary" else VALIDATION_HEADER)]
    for r in results:
        row = [
            country_name(r.country),
            _scenario_text(r),
            f"{r.eds:.3f}",
            f"{r.mean_real:.3f}",
            f"{r.mean_cf:.3f}",
        ]
        if layout == "summary":
            row.append(f"{r.delta_development:+.3f}")
        rows.append(row)
    return rows


def render_table_csv(results: Sequence[EdsResult], layout: str = "summary") -> str:
    import io

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(table_rows(results, layout))
    return buf.getvalue()


def render_table_json(results: Sequence[EdsResult], layout: str = "summary") -> str:
    rows = table_rows(results, layout)
    header, body = rows[0], rows[1:]
    return json.dumps([dict(zip(header, r)) for r in body], ensure_ascii=False, indent=1) + "\n"
