"""Robustness procedures around the EDS: bootstrap retraining, bootstrap of
Monte Carlo draws, rolling windows, alternative regime schemes, benchmark
correlations."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..eds import EdsResult, Scenario, compute_eds
from ..errors import ProcedureError, SampleSizeError, SchemeError, WindowError
from ..panel import Panel, PreprocessConfig, RegimeScheme, preprocess
from ..rng import derive_seed, make_rng
from ..wgan import GanConfig, train_preprocessed
from .diagnostics import mad_outlier_screen, pearson_corr

log = logging.getLogger(__name__)

DEFAULT_WINDOWS = ((1960, 1980), (1980, 2000), (2000, 2020))

Trainer = Callable[[Panel, GanConfig, PreprocessConfig], object]


def default_trainer(panel: Panel, config: GanConfig, prep_config: PreprocessConfig):
    return train_preprocessed(preprocess(panel, prep_config), config)


# ------------------------------------------------------- bootstrap of draws


@dataclass
class BootstrapDrawsResult:
    mean: float
    ci_low: float
    ci_high: float
    p_value: float
    means: np.ndarray = field(repr=False)


def bootstrap_draws(deltas, replications: int = 1000, rng: np.random.Generator | None = None) -> BootstrapDrawsResult:
    """Resample per-draw counterfactual deltas with replacement.

    The p-value is twice the smaller tail fraction of bootstrap means on
    either side of zero (capped at 1); the interval is the 2.5/97.5
    percentiles of the bootstrap means.
    """
    d = np.asarray(deltas, dtype=float).ravel()
    if d.size < 10:
        raise SampleSizeError("bootstrap_draws needs at least 10 deltas")
    if replications < 2:
        raise SampleSizeError("bootstrap_draws needs at least 2 replications")
    rng = rng if rng is not None else make_rng(0, "bootstrap-draws")
    idx = rng.integers(0, d.size, size=(replications, d.size))
    means = d[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    below = float(np.mean(means <= 0.0))
    above = float(np.mean(means >= 0.0))
    p = min(1.0, 2.0 * min(below, above))
    return BootstrapDrawsResult(float(d.mean()), float(lo), float(hi), p, means)


# -------------------------------------------------- bootstrap retraining


@dataclass
class BootstrapRetrainResult:
    eds: list[float]
    replications: list[int]
    skipped: list[int]
    std: float
    ci_low: float
    ci_high: float

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.eds)


def _country_subsample(panel: Panel, keep: str, frac: float, rng: np.random.Generator) -> Panel:
    countries = panel.countries
    others = [c for c in countries if c != keep]
    k = max(0, int(round(frac * len(countries))) - 1)
    chosen = set(rng.choice(len(others), size=min(k, len(others)), replace=False).tolist()) if others else set()
    selected = {others[i] for i in chosen} | {keep}
    return panel.select(lambda r: r.country in selected)


def _run_parallel(fn, items, n_jobs: int):
    if n_jobs == 1:
        return [fn(item) for item in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(item) for item in items)


def bootstrap_retrain(
    panel: Panel,
    gan_config: GanConfig,
    scenario: Scenario,
    replications: int = 100,
    subsample_frac: float = 0.8,
    seed: int = 0,
    preprocess_config: PreprocessConfig | None = None,
    trainer: Trainer | None = None,
    n_jobs: int = 1,
    eds_bootstrap: int = 0,
) -> BootstrapRetrainResult:
    """Retrain on country subsamples and recompute the scenario's EDS.

    The scenario country is always retained. Replications whose subsample
    loses the target regime are skipped; more than half skipped is an error.
    """
    if replications < 2:
        raise SampleSizeError("bootstrap_retrain needs at least 2 replications")
    if scenario.country not in panel.countries:
        raise ProcedureError(f"scenario country {scenario.country} not in panel")
    prep_config = preprocess_config or PreprocessConfig()
    trainer = trainer or default_trainer

    def one(rep: int):
        sub = _country_subsample(panel, scenario.country, subsample_frac, make_rng(seed, "bootstrap-sample", rep))
        if scenario.target_regime not in sub.regimes():
            return rep, None
        cfg = replace(gan_config, seed=derive_seed(seed, "bootstrap-train", rep))
        model = trainer(sub, cfg, prep_config)
        res = compute_eds(model, sub, scenario, seed=cfg.seed, bootstrap_replications=eds_bootstrap)
        return rep, res.eds

    outcomes = sorted(_run_parallel(one, range(replications), n_jobs), key=lambda t: t[0])
    skipped = [rep for rep, v in outcomes if v is None]
    for rep in skipped:
        log.warning("bootstrap replication %d skipped: target regime %s absent", rep, scenario.target_regime)
    if len(skipped) * 2 > replications:
        raise ProcedureError(f"{len(skipped)} of {replications} replications lost the target regime")
    kept = [(rep, v) for rep, v in outcomes if v is not None]
    values = np.array([v for _, v in kept])
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    lo, hi = np.percentile(values, [2.5, 97.5])
    return BootstrapRetrainResult(
        eds=[float(v) for v in values],
        replications=[rep for rep, _ in kept],
        skipped=skipped,
        std=std,
        ci_low=float(lo),
        ci_high=float(hi),
    )


# --------------------------------------------------------- rolling windows


def _window_filter(windows: Sequence[tuple[int, int]]):
    """Each window is start <= year < end, except the last, which includes
    its end year. Windows must be ordered and non-overlapping."""
    ws = [tuple(int(v) for v in w) for w in windows]
    if not ws:
        raise WindowError("no windows given")
    for (a, b) in ws:
        if b <= a:
            raise WindowError(f"window {a}-{b} is empty")
    for (a0, b0), (a1, b1) in zip(ws, ws[1:]):
        if a1 < b0:
            raise WindowError(f"windows {a0}-{b0} and {a1}-{b1} overlap or are out of order")
    last = len(ws) - 1

    def contains(i: int, year: int) -> bool:
        a, b = ws[i]
        return a <= year < b or (i == last and year == b)

    return ws, contains


def rolling_window_eds(
    panel: Panel,
    gan_config: GanConfig,
    scenario: Scenario,
    windows: Sequence[tuple[int, int]] = DEFAULT_WINDOWS,
    preprocess_config: PreprocessConfig | None = None,
    trainer: Trainer | None = None,
    n_jobs: int = 1,
    eds_bootstrap: int = 0,
) -> dict[tuple[int, int], EdsResult]:
    """Preprocess, train and evaluate the scenario independently per window.

    Every window trains with ``gan_config`` unchanged (same seed), so a single
    window spanning the whole panel reproduces the full-sample EDS.
    """
    ws, contains = _window_filter(windows)
    prep_config = preprocess_config or PreprocessConfig()
    trainer = trainer or default_trainer
    subsets = []
    for i, (a, b) in enumerate(ws):
        sub = panel.select(lambda r, i=i: contains(i, r.year))
        if len(sub) < 2:
            raise WindowError(f"window {a}-{b} holds fewer than two observations")
        if scenario.country not in sub.countries:
            raise WindowError(f"window {a}-{b} has no observation of {scenario.country}")
        if scenario.target_regime not in sub.regimes():
            raise WindowError(f"window {a}-{b} has no rows of regime {scenario.target_regime}")
        subsets.append(sub)

    def one(i: int):
        model = trainer(subsets[i], gan_config, prep_config)
        return compute_eds(model, subsets[i], scenario, seed=gan_config.seed, bootstrap_replications=eds_bootstrap)

    results = _run_parallel(one, range(len(ws)), n_jobs)
    return {w: r for w, r in zip(ws, results)}


# ----------------------------------------------------- alternative schemes


def translate_label(source: RegimeScheme, reference: RegimeScheme, label: str) -> str:
    """Majority ``reference`` label among countries carrying ``label`` in
    ``source`` (ties go to the alphabetically first label)."""
    members = [c for c, lab in source.assignment.items() if lab == label and c in reference.assignment]
    if not members:
        raise SchemeError(f"label {label!r} of scheme {source.name!r} has no countries in common")
    votes = Counter(reference.assignment[c] for c in members)
    best = max(votes.values())
    return sorted(k for k, v in votes.items() if v == best)[0]


def consensus_anchors(schemes: Sequence[RegimeScheme], reference: RegimeScheme) -> dict[str, str]:
    """Countries whose label, translated into ``reference`` vocabulary, agrees
    across every scheme; mapped to their reference label."""
    anchors = {}
    for country, ref_label in reference.assignment.items():
        ok = True
        for s in schemes:
            if s is reference:
                continue
            if country not in s.assignment or translate_label(s, reference, s.assignment[country]) != ref_label:
                ok = False
                break
        if ok:
            anchors[country] = ref_label
    return anchors


def network_assignment(scheme: RegimeScheme, anchors: dict[str, str]) -> dict[str, str]:
    """Label every country with the label of its most similar anchor."""
    if scheme.similarity is None:
        raise SchemeError("network scheme needs a similarity matrix")
    names = list(scheme.similarity_countries or sorted(scheme.assignment))
    pos = {c: i for i, c in enumerate(names)}
    anchor_list = sorted(a for a in anchors if a in pos)
    if not anchor_list:
        raise SchemeError("network scheme has no anchor countries")
    sim = np.asarray(scheme.similarity, dtype=float)
    out = {}
    for country in names:
        row = sim[pos[country]]
        scores = [row[pos[a]] for a in anchor_list]
        out[country] = anchors[anchor_list[int(np.argmax(scores))]]
    return out


def resolve_schemes(schemes: Sequence[RegimeScheme]) -> list[RegimeScheme]:
    """Replace each network scheme's labels by nearest-anchor labels in the
    vocabulary of the first non-network scheme."""
    plain = [s for s in schemes if s.name != "network"]
    if not plain:
        return list(schemes)
    reference = plain[0]
    anchors = consensus_anchors(plain, reference)
    out = []
    for s in schemes:
        if s.name == "network":
            out.append(RegimeScheme("network", network_assignment(s, anchors), s.similarity, s.similarity_countries))
        else:
            out.append(s)
    return out


@dataclass
class SchemeSensitivity:
    names: list[str]
    scenarios: list[str]
    eds: np.ndarray  # schemes x scenarios
    correlation: np.ndarray  # schemes x schemes


def scheme_sensitivity(
    panel: Panel,
    gan_config: GanConfig,
    scenario_set: Sequence[Scenario],
    schemes: Sequence[RegimeScheme],
    preprocess_config: PreprocessConfig | None = None,
    trainer: Trainer | None = None,
    eds_bootstrap: int = 0,
) -> SchemeSensitivity:
    """EDS of each scenario under each regime scheme and the pairwise Pearson
    correlations of the resulting EDS vectors.

    Scenario targets are labels of the first scheme; under other schemes the
    target becomes the majority label of the target's member countries.
    """
    if len(schemes) < 2:
        raise SchemeError("scheme_sensitivity needs at least two schemes")
    for s in schemes:
        s.covers(panel)
    resolved = resolve_schemes(schemes)
    base = resolved[0]
    prep_config = preprocess_config or PreprocessConfig()
    trainer = trainer or default_trainer
    rows = []
    for s in resolved:
        relabelled = panel.with_regimes(s.assignment)
        model = trainer(relabelled, gan_config, prep_config)
        vec = []
        for sc in scenario_set:
            target = sc.target_regime if s is base else translate_label(base, s, sc.target_regime)
            res = compute_eds(
                model,
                relabelled,
                replace(sc, target_regime=target),
                seed=gan_config.seed,
                bootstrap_replications=eds_bootstrap,
            )
            vec.append(res.eds)
        rows.append(vec)
    eds = np.array(rows)
    k = len(resolved)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            corr[i, j] = corr[j, i] = pearson_corr(eds[i], eds[j])
    return SchemeSensitivity(
        names=[s.name for s in resolved],
        scenarios=[sc.label for sc in scenario_set],
        eds=eds,
        correlation=corr,
    )


# ------------------------------------------------ external benchmarks


BENCHMARKS = {"hdi": "hdi", "gdp": "gdp_pc", "eci": "eci"}


def benchmark_correlations(eds_by_country: dict[str, float], panel: Panel) -> dict[str, float | None]:
    """Pearson r between country EDS values and each country's mean HDI,
    GDP per capita and ECI (None when fewer than three countries qualify)."""
    out: dict[str, float | None] = {}
    for key, column in BENCHMARKS.items():
        xs, ys = [], []
        for country, value in sorted(eds_by_country.items()):
            vals = [getattr(r, column) for r in panel.for_country(country).records]
            vals = [v for v in vals if v is not None]
            if vals:
                xs.append(value)
                ys.append(math.fsum(vals) / len(vals))
        out[key] = pearson_corr(xs, ys) if len(xs) >= 3 else None
    return out


@dataclass
class RobustnessReport:
    rolling: dict = field(default_factory=dict)
    bootstrap_std: float | None = None
    scheme_correlations: dict = field(default_factory=dict)
    benchmark_correlations: dict = field(default_factory=dict)
    mad_excluded: list[str] = field(default_factory=list)


def mad_exclusions(eds_by_country: dict[str, float], threshold: float = 3.0) -> list[str]:
    names = sorted(eds_by_country)
    if len(names) < 3:
        return []
    _, excluded = mad_outlier_screen([eds_by_country[c] for c in names], threshold)
    return [names[i] for i in excluded]
