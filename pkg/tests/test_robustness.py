from __future__ import annotations

import logging

import numpy as np
import pytest

from cforge.eds import Scenario, compute_eds
from cforge.errors import ProcedureError, SampleSizeError, SchemeError, WindowError
from cforge.nn import MlpConfig
from cforge.panel import Panel, PanelRecord, PreprocessConfig, RegimeScheme, preprocess
from cforge.rng import make_rng
from cforge.stats.robustness import (
    DEFAULT_WINDOWS,
    benchmark_correlations,
    bootstrap_draws,
    bootstrap_retrain,
    mad_exclusions,
    network_assignment,
    resolve_schemes,
    rolling_window_eds,
    scheme_sensitivity,
    translate_label,
)
from cforge.synthetic import planted_world
from cforge.wgan import GanConfig, train_preprocessed

TINY = GanConfig(
    generator=MlpConfig((8,), "relu"),
    critic=MlpConfig((8,), "leaky_relu"),
    epochs=2,
    batch_size=64,
    calibration_size=128,
    seed=11,
)
RAW = PreprocessConfig(normalization="none", winsor_pct=None)


def constant_trainer(panel, config, prep_config):
    def draw(n, regime, rng):
        return np.full((n, 3), 0.6)

    return draw


def regime_mean_trainer(panel, config, prep_config):
    """Sampler emitting each regime's mean triplet plus seeded noise."""
    trip = panel.triplets()
    labels = np.array([r.regime for r in panel.records])
    means = {lab: trip[labels == lab].mean(axis=0) for lab in set(labels)}

    def draw(n, regime, rng):
        return np.clip(means[regime] + rng.normal(0.0, 0.01, size=(n, 3)), 0.0, 1.0)

    return draw


@pytest.fixture(scope="module")
def world():
    return planted_world(countries_per_regime=5, years=range(1960, 2021, 4), seed=2)


# --------------------------------------------------------- bootstrap draws


def test_bootstrap_draws_degenerate():
    res = bootstrap_draws(np.full(50, 0.3), 200, make_rng(0))
    assert res.p_value == 0.0
    assert res.ci_low == pytest.approx(0.3) and res.ci_high == pytest.approx(0.3)


def test_bootstrap_draws_null_and_percentile_oracle():
    d = make_rng(1, "null").normal(size=400)
    d = np.concatenate([d, -d])
    res = bootstrap_draws(d, 1000, make_rng(2))
    assert res.p_value > 0.5
    srt = np.sort(res.means)
    for q, got in ((0.025, res.ci_low), (0.975, res.ci_high)):
        h = (srt.size - 1) * q
        lo = int(np.floor(h))
        assert got == pytest.approx(srt[lo] + (h - lo) * (srt[lo + 1] - srt[lo]), abs=1e-15)
    with pytest.raises(SampleSizeError):
        bootstrap_draws(np.ones(9))


# ------------------------------------------------------- bootstrap retrain


def test_bootstrap_retrain_constant_pipeline(world):
    res = bootstrap_retrain(world, TINY, Scenario("AAA", "B", 50), replications=6, trainer=constant_trainer)
    assert res.std == 0.0
    assert len(res.eds) == 6 and res.skipped == []
    assert res.replications == list(range(6))


def test_bootstrap_retrain_keeps_scenario_country(world):
    seen = []

    def spy(panel, config, prep_config):
        seen.append((sorted(panel.countries), config.seed))
        return constant_trainer(panel, config, prep_config)

    bootstrap_retrain(world, TINY, Scenario("AAC", "B", 20), replications=5, subsample_frac=0.6, trainer=spy)
    assert all("AAC" in countries and len(countries) == 6 for countries, _ in seen)
    assert len({seed for _, seed in seen}) == 5


def _lopsided_panel():
    recs = []
    for i, c in enumerate(("AAA", "AAB", "AAC", "AAD", "AAE", "BBA")):
        regime = "B" if c == "BBA" else "A"
        for y in range(2000, 2003):
            recs.append(PanelRecord(c, y, 0.1 * (i + 1), 0.5, 0.5, regime))
    return Panel(tuple(recs))


def test_bootstrap_retrain_skips_and_fails(caplog):
    panel = _lopsided_panel()
    with caplog.at_level(logging.WARNING):
        with pytest.raises(ProcedureError):
            bootstrap_retrain(panel, TINY, Scenario("AAA", "B", 20), replications=10, subsample_frac=0.34, trainer=constant_trainer)
    assert "skipped" in caplog.text
    res = bootstrap_retrain(panel, TINY, Scenario("AAA", "B", 20), replications=20, subsample_frac=0.84, trainer=constant_trainer)
    assert len(res.eds) == 20 - len(res.skipped)
    assert 0 < len(res.skipped) <= 10


def test_bootstrap_retrain_parallel_matches_serial(world):
    kw = dict(replications=4, trainer=regime_mean_trainer, seed=3)
    a = bootstrap_retrain(world, TINY, Scenario("AAA", "B", 50), **kw)
    b = bootstrap_retrain(world, TINY, Scenario("AAA", "B", 50), n_jobs=2, **kw)
    assert a.eds == b.eds


# --------------------------------------------------------- rolling windows


def test_rolling_windows_echoed(world):
    out = rolling_window_eds(world, TINY, Scenario("AAA", "B", 100), DEFAULT_WINDOWS, trainer=regime_mean_trainer)
    assert list(out) == [(1960, 1980), (1980, 2000), (2000, 2020)]
    vals = [r.eds for r in out.values()]
    assert all(v > 0 for v in vals)


def test_single_window_equals_full_sample(world):
    scen = Scenario("AAB", "B", 200)
    out = rolling_window_eds(world, TINY, scen, [(1960, 2020)], preprocess_config=RAW, eds_bootstrap=0)
    model = train_preprocessed(preprocess(world, RAW), TINY)
    full = compute_eds(model, world, scen, seed=TINY.seed, bootstrap_replications=0)
    assert out[(1960, 2020)].eds == full.eds
    assert out[(1960, 2020)].variance == full.variance


def test_window_errors(world):
    scen = Scenario("AAA", "B", 20)
    with pytest.raises(WindowError, match="1900-1950"):
        rolling_window_eds(world, TINY, scen, [(1900, 1950)], trainer=constant_trainer)
    with pytest.raises(WindowError):
        rolling_window_eds(world, TINY, scen, [(1960, 1990), (1980, 2000)], trainer=constant_trainer)
    with pytest.raises(WindowError):
        rolling_window_eds(world, TINY, scen, [(1990, 1980)], trainer=constant_trainer)


def test_last_window_includes_end_year():
    recs = [PanelRecord(c, y, 0.3, 0.3, 0.3, r) for c, r in (("AAA", "A"), ("BBB", "B")) for y in (1980, 2000)]
    panel = Panel(tuple(recs))
    seen = []

    def spy(p, config, prep_config):
        seen.append(p.years)
        return constant_trainer(p, config, prep_config)

    rolling_window_eds(panel, TINY, Scenario("AAA", "B", 20), [(1980, 1990), (1990, 2000)], trainer=spy)
    assert seen == [[1980], [2000]]


# ---------------------------------------------------------------- schemes


def _scheme_world():
    rng = make_rng(5, "schemes")
    recs = []
    levels = {"AAA": 0.2, "AAB": 0.25, "AAC": 0.3, "BBA": 0.6, "BBB": 0.65, "BBC": 0.7}
    for c, lvl in levels.items():
        for y in range(2000, 2005):
            trip = np.clip(lvl + rng.normal(0, 0.02, 3), 0, 1)
            recs.append(PanelRecord(c, y, *map(float, trip), "A" if c[0] == "A" else "B"))
    return Panel(tuple(recs)), levels


def test_identical_schemes_correlate_perfectly():
    panel, levels = _scheme_world()
    geo = {c: c[0] for c in levels}
    schemes = [RegimeScheme("geographic", geo), RegimeScheme("custom", dict(geo))]
    scen = [Scenario(c, "B" if c[0] == "A" else "A", 100) for c in levels]
    out = scheme_sensitivity(panel, TINY, scen, schemes, trainer=regime_mean_trainer)
    np.testing.assert_allclose(out.correlation, np.ones((2, 2)), atol=1e-12)


def test_block_network_scheme_matches_geography():
    panel, levels = _scheme_world()
    geo = {c: c[0] for c in levels}
    names = tuple(levels)
    block = np.array([[1.0 if a[0] == b[0] else 0.0 for b in names] for a in names])
    network = RegimeScheme("network", {c: "?" for c in names}, block, names)
    gov = RegimeScheme("governance", {c: ("HI" if c[0] == "B" else "LO") for c in names})
    resolved = resolve_schemes([RegimeScheme("geographic", geo), gov, network])
    assert resolved[2].assignment == geo
    scen = [Scenario(c, "B" if c[0] == "A" else "A", 100) for c in levels]
    out = scheme_sensitivity(panel, TINY, scen, [RegimeScheme("geographic", geo), gov, network], trainer=regime_mean_trainer)
    np.testing.assert_allclose(out.correlation, out.correlation.T, atol=0)
    np.testing.assert_allclose(np.diag(out.correlation), 1.0)
    # geography and the block network share labels, hence draw streams
    assert out.correlation[0, 2] == pytest.approx(1.0, abs=1e-12)
    # governance renames the same partition; only Monte Carlo noise differs
    assert out.correlation[0, 1] > 0.999
    assert out.eds.shape == (3, len(levels))


def test_translate_and_network_assignment():
    src = RegimeScheme("governance", {"X": "HI", "Y": "HI", "Z": "LO"})
    ref = RegimeScheme("geographic", {"X": "EU", "Y": "EU", "Z": "LA"})
    assert translate_label(src, ref, "HI") == "EU"
    sim = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.2], [0.1, 0.2, 1.0]])
    net = RegimeScheme("network", {"X": "?", "Y": "?", "Z": "?"}, sim, ("X", "Y", "Z"))
    assert network_assignment(net, {"X": "EU", "Z": "LA"}) == {"X": "EU", "Y": "EU", "Z": "LA"}


def test_scheme_errors():
    panel, levels = _scheme_world()
    geo = RegimeScheme("geographic", {c: c[0] for c in levels})
    scen = [Scenario("AAA", "B", 10)]
    with pytest.raises(SchemeError):
        scheme_sensitivity(panel, TINY, scen, [geo], trainer=constant_trainer)
    partial = RegimeScheme("custom", {"AAA": "A"})
    with pytest.raises(SchemeError, match="BBB"):
        scheme_sensitivity(panel, TINY, scen, [geo, partial], trainer=constant_trainer)


# ------------------------------------------------------ benchmarks and MAD


def test_benchmark_correlations_and_mad():
    recs = []
    for i, c in enumerate(("AAA", "BBB", "CCC", "DDD")):
        recs.append(PanelRecord(c, 2000, 0.5, 0.5, 0.5, "R", hdi=0.1 * i, gdp_pc=1000.0 * i))
    panel = Panel(tuple(recs))
    eds = {"AAA": 0.0, "BBB": 0.2, "CCC": 0.4, "DDD": 0.6}
    out = benchmark_correlations(eds, panel)
    assert out["hdi"] == pytest.approx(1.0) and out["gdp"] == pytest.approx(1.0)
    assert out["eci"] is None
    assert mad_exclusions({"A": 0.1, "B": 0.11, "C": 0.12, "D": 0.1, "E": 5.0}) == ["E"]
    assert mad_exclusions({"A": 0.1, "B": 0.2}) == []
