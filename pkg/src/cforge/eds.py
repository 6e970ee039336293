"""Expected Developmental Shift: counterfactual minus observed development.

The development index of a normalized triplet is either the equal-weight
mean of its three components or its first-principal-component score
min-max rescaled over the training panel. A scenario's EDS is the Monte Carlo
mean of the index over generator draws under the target regime, minus the
country's mean index over its observed years.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, DomainError, SampleSizeError, VocabularyError
from .panel import Panel, PcaResult, pca_fit
from .rng import make_rng
from .wgan import GanModel, generate, sample_latent

RESULT_COLUMNS = (
    "country",
    "scenario",
    "eds",
    "variance",
    "mean_real",
    "mean_cf",
    "delta_development",
    "ci_low",
    "ci_high",
)


@dataclass(frozen=True)
class Scenario:
    country: str
    target_regime: str
    n_draws: int = 1000
    index_mode: str = "equal_mean"

    def __post_init__(self):
        if self.n_draws < 2:
            raise SampleSizeError("a scenario needs at least two draws")
        if self.index_mode not in ("equal_mean", "pca_first"):
            raise ValueError(f"unknown index mode {self.index_mode!r}")

    @property
    def label(self) -> str:
        return f"{self.country}->{self.target_regime}"


@dataclass
class EdsResult:
    country: str
    scenario: str
    eds: float
    variance: float | None
    mean_real: float
    mean_cf: float
    delta_development: float
    n_draws: int | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    p_value: float | None = None
    draws: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PcaIndex:
    """First-component index fitted on training triplets."""

    pca: PcaResult
    lo: float
    hi: float

    @classmethod
    def fit(cls, triplets) -> "PcaIndex":
        x = np.asarray(triplets, dtype=float)
        pca = pca_fit(x, 1)
        scores = pca.transform(x)[:, 0]
        return cls(pca, float(scores.min()), float(scores.max()))

    def __call__(self, triplets) -> np.ndarray:
        scores = self.pca.transform(np.atleast_2d(triplets))[:, 0]
        span = self.hi - self.lo
        if span == 0:
            return np.full(scores.shape, 0.5)
        return np.clip((scores - self.lo) / span, 0.0, 1.0)


def development_index(triplet, mode: str = "equal_mean", pca_index: PcaIndex | None = None):
    """Composite development index in [0, 1] for one triplet or an n x 3 batch."""
    x = np.asarray(triplet, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if mode == "equal_mean":
        if np.any(x < 0) or np.any(x > 1):
            raise DomainError("equal_mean index needs components in [0, 1]")
        out = x.mean(axis=1)
    elif mode == "pca_first":
        if pca_index is None:
            raise ValueError("pca_first index needs a fitted PcaIndex")
        out = pca_index(x)
    else:
        raise ValueError(f"unknown index mode {mode!r}")
    return float(out[0]) if single else out


def model_index(model: GanModel, mode: str) -> PcaIndex | None:
    if mode != "pca_first":
        return None
    if model.index_pca is None:
        raise ValueError("model carries no first-component index")
    pca, lo, hi = model.index_pca
    return PcaIndex(pca, lo, hi)


Sampler = Callable[[int, str, np.random.Generator], np.ndarray]


def model_sampler(model: GanModel) -> Sampler:
    def draw(n: int, regime: str, rng: np.random.Generator) -> np.ndarray:
        return generate(model, sample_latent(n, model.config.latent_dim, rng), regime)

    return draw


def _sampler_for(model) -> Sampler:
    if isinstance(model, GanModel):
        return model_sampler(model)
    return model


def counterfactual_draws(
    model, regime: str, n_draws: int, rng: np.random.Generator, mode: str = "equal_mean", pca_index=None
) -> np.ndarray:
    """Development index of each of ``n_draws`` generated triplets."""
    if isinstance(model, GanModel) and regime not in model.condition_vocabulary:
        raise VocabularyError(
            f"unknown regime {regime!r}; known: {', '.join(model.condition_vocabulary)}"
        )
    triplets = _sampler_for(model)(n_draws, regime, rng)
    if isinstance(model, GanModel) and pca_index is None:
        pca_index = model_index(model, mode)
    return np.asarray(development_index(triplets, mode, pca_index), dtype=float)


def monte_carlo_expectation(
    model, country: str, regime: str, n_draws: int, rng: np.random.Generator, mode: str = "equal_mean", pca_index=None
) -> float:
    """(1/N) sum_k D(G(z_k | regime)). ``model`` may also be a sampler callable
    ``(n, regime, rng) -> n x 3`` (used for stub generators)."""
    return float(np.mean(counterfactual_draws(model, regime, n_draws, rng, mode, pca_index)))


def scenario_rng(seed: int, scenario: Scenario) -> np.random.Generator:
    return make_rng(seed, "scenario", scenario.country, scenario.target_regime)


def observed_index(model, panel: Panel, country: str, mode: str = "equal_mean", pca_index=None) -> np.ndarray:
    rows = panel.for_country(country)
    if len(rows) == 0:
        raise DataError(f"country {country} not present in panel")
    raw = rows.triplets()
    raw = raw[~np.any(np.isnan(raw), axis=1)]
    if raw.shape[0] == 0:
        raise DataError(f"country {country} has no observed triplet")
    transforms = getattr(model, "fitted_transforms", None)
    normalized = transforms.normalize(raw) if transforms is not None else raw
    if mode == "equal_mean":
        normalized = np.clip(normalized, 0.0, 1.0)
    if isinstance(model, GanModel) and pca_index is None:
        pca_index = model_index(model, mode)
    return np.asarray(development_index(normalized, mode, pca_index), dtype=float)


def compute_eds(
    model,
    panel: Panel,
    scenario: Scenario,
    seed: int | None = None,
    bootstrap_replications: int = 1000,
    pca_index: PcaIndex | None = None,
) -> EdsResult:
    """EDS, its Monte Carlo variance, and a bootstrap interval over draws.

    ``seed`` defaults to the model's training seed; each scenario draws from
    its own stream derived from (seed, country, regime).
    """
    from .stats.robustness import bootstrap_draws

    if seed is None:
        seed = model.config.seed if isinstance(model, GanModel) else 0
    mode = scenario.index_mode
    d_real = observed_index(model, panel, scenario.country, mode, pca_index)
    mean_real = math.fsum(d_real) / d_real.size
    rng = scenario_rng(seed, scenario)
    draws = counterfactual_draws(model, scenario.target_regime, scenario.n_draws, rng, mode, pca_index)
    mean_cf = float(np.mean(draws))
    eds = mean_cf - mean_real
    deltas = draws - mean_real
    variance = float(np.sum((deltas - eds) ** 2) / (scenario.n_draws - 1))
    ci_low = ci_high = p_value = None
    if bootstrap_replications and scenario.n_draws >= 10:
        boot = bootstrap_draws(deltas, bootstrap_replications, make_rng(seed, "eds-boot", scenario.label))
        ci_low, ci_high, p_value = boot.ci_low, boot.ci_high, boot.p_value
    return EdsResult(
        country=scenario.country,
        scenario=scenario.label,
        eds=eds,
        variance=variance,
        mean_real=mean_real,
        mean_cf=mean_cf,
        delta_development=mean_cf - mean_real,
        n_draws=scenario.n_draws,
        ci_low=ci_low,
        ci_high=ci_high,
        p_value=p_value,
        draws=draws,
    )


def group_eds_comparison(results_a: Sequence[EdsResult], results_b: Sequence[EdsResult]):
    """Wilcoxon rank-sum comparison of two groups' EDS values."""
    from .stats.diagnostics import wilcoxon_rank_sum

    if len(results_a) < 3 or len(results_b) < 3:
        raise SampleSizeError("each group needs at least three EDS values")
    a = [r.eds if isinstance(r, EdsResult) else float(r) for r in results_a]
    b = [r.eds if isinstance(r, EdsResult) else float(r) for r in results_b]
    return wilcoxon_rank_sum(a, b)


# ------------------------------------------------------------------ io


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6g}"


def write_results(results: Iterable[EdsResult], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in results:
        writer.writerow(
            [
                r.country,
                r.scenario,
                _fmt(r.eds),
                _fmt(r.variance),
                _fmt(r.mean_real),
                _fmt(r.mean_cf),
                _fmt(r.delta_development),
                _fmt(r.ci_low),
                _fmt(r.ci_high),
            ]
        )


def read_results(stream) -> list[EdsResult]:
    def num(cell):
        cell = (cell or "").strip()
        return None if cell == "" else float(cell)

    out = []
    for row in csv.DictReader(stream):
        missing = [c for c in RESULT_COLUMNS if c not in row]
        if missing:
            raise DataError(f"results file missing columns: {', '.join(missing)}")
        mean_real, mean_cf = num(row["mean_real"]), num(row["mean_cf"])
        delta = num(row["delta_development"])
        if delta is None:
            delta = mean_cf - mean_real
        out.append(
            EdsResult(
                country=row["country"].strip(),
                scenario=row["scenario"].strip(),
                eds=num(row["eds"]),
                variance=num(row["variance"]),
                mean_real=mean_real,
                mean_cf=mean_cf,
                delta_development=delta,
                ci_low=num(row["ci_low"]),
                ci_high=num(row["ci_high"]),
            )
        )
    return out


def parse_scenarios(text: str, n_draws: int = 1000, index_mode: str = "equal_mean") -> list[Scenario]:
    """Parse ``"ESP:LATAM,URY:EUROPE"`` into scenarios."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise DataError(f"scenario {item!r} must look like COUNTRY:REGIME")
        country, regime = (s.strip() for s in item.split(":", 1))
        out.append(Scenario(country, regime, n_draws, index_mode))
    return out
