"""Fidelity battery comparing a real and a synthetic triplet sample."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..panel import TRIPLET, pca_fit
from .diagnostics import (
    JS_BINS,
    JS_EPSILON,
    TestResult,
    embedding_correlation,
    frechet_gaussian,
    js_divergence,
    ks_two_sample,
    mahalanobis,
)

REPORT_COLUMNS = ("test", "variable", "statistic", "p_value")


def sig6(value):
    """Round to 6 significant digits (the report printing precision)."""
    if value is None:
        return None
    v = float(value)
    if not math.isfinite(v):
        return None
    return float(f"{v:.6g}")


@dataclass
class ValidationReport:
    """Results keyed by test name, then variable name."""

    results: dict[str, dict[str, TestResult]] = field(default_factory=dict)

    def add(self, test: str, variable: str, result: TestResult) -> None:
        self.results.setdefault(test, {})[variable] = result

    def get(self, test: str, variable: str) -> TestResult:
        return self.results[test][variable]

    def rows(self):
        for test in sorted(self.results):
            for variable in sorted(self.results[test]):
                r = self.results[test][variable]
                yield test, variable, r

    def to_dict(self) -> dict:
        out: dict = {}
        for test, variable, r in self.rows():
            out.setdefault(test, {})[variable] = {
                "statistic": sig6(r.statistic),
                "p_value": sig6(r.p_value),
                "details": {k: sig6(v) if isinstance(v, (int, float)) else v for k, v in sorted(r.details.items())},
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def write_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for test, variable, r in self.rows():
            p = "" if r.p_value is None else f"{r.p_value:.6g}"
            writer.writerow([test, variable, f"{r.statistic:.6g}", p])


def validate_fidelity(
    real,
    synthetic,
    variables: Sequence[str] = TRIPLET,
    bins: int = JS_BINS,
    epsilon: float = JS_EPSILON,
    ridge: float = 1e-9,
) -> ValidationReport:
    """Per-variable KS, JS and moment deviations; joint Mahalanobis, Frechet
    and latent-embedding correlation.

    Mahalanobis reports the mean distance of synthetic rows from the real
    mean under the real covariance, next to the same figure for real rows.
    Embedding correlation projects both samples on the first two principal
    components of the real sample and pairs them by rank.
    """
    x = np.asarray(real, dtype=float)
    y = np.asarray(synthetic, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1] or x.shape[1] != len(variables):
        raise ValueError("real and synthetic must be n x d with one name per column")
    report = ValidationReport()
    for j, name in enumerate(variables):
        a, b = x[:, j], y[:, j]
        report.add("ks", name, ks_two_sample(a, b))
        report.add("js_divergence", name, TestResult("js_divergence", js_divergence(a, b, bins, epsilon)))
        mean_dev = float(np.mean(b) - np.mean(a))
        var_a = float(np.var(a, ddof=1))
        var_dev = float(np.var(b, ddof=1) / var_a - 1.0) if var_a > 0 else math.nan
        report.add("mean_deviation", name, TestResult("mean_deviation", mean_dev))
        report.add("variance_ratio_deviation", name, TestResult("variance_ratio_deviation", var_dev))

    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    d_syn = np.array([mahalanobis(row, mu, cov, ridge) for row in y])
    d_real = np.array([mahalanobis(row, mu, cov, ridge) for row in x])
    report.add(
        "mahalanobis",
        "all",
        TestResult(
            "mahalanobis",
            float(d_syn.mean()),
            details={"real_mean_distance": float(d_real.mean())},
        ),
    )
    report.add("frechet_gaussian", "all", TestResult("frechet_gaussian", frechet_gaussian(x, y)))

    k = min(2, x.shape[1])
    pca = pca_fit(x, k)
    emb = embedding_correlation(pca.transform(x), pca.transform(y), pairing="rank")
    for j, r in enumerate(emb["per_dimension"]):
        report.add("embedding_correlation", f"Z{j + 1}", TestResult("embedding_correlation", r))
    report.add("embedding_correlation", "pooled", TestResult("embedding_correlation", emb["pooled"]))
    return report
