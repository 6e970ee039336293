"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` to see the lines live; they are
repeated in the terminal summary. Criteria 3 to 5 train real models and take
several minutes on one core.
"""

from __future__ import annotations

import csv
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from cforge.eds import Scenario, compute_eds
from cforge.nn import MlpConfig
from cforge.panel import PreprocessConfig, preprocess
from cforge.report import cli, render_figure
from cforge.rng import make_rng
from cforge.stats import fixed_effects_regression, js_divergence, ks_two_sample
from cforge.stats.robustness import DEFAULT_WINDOWS, bootstrap_retrain, rolling_window_eds
from cforge.synthetic import fixed_effects_panel, mixture_matrix, planted_world
from cforge.wgan import GanConfig, sample_synthetic, train, train_preprocessed

import test_nn
import test_report
import test_stats

# desk-scale networks for the planted-effect experiments
DESK = GanConfig(
    generator=MlpConfig((32, 32), "relu", batch_norm=True),
    critic=MlpConfig((32, 32), "leaky_relu", 0.2, dropout_rate=0.3),
    epochs=300,
    eta=1e-3,
    calibration_size=2048,
    seed=1,
)
RAW = PreprocessConfig(normalization="none", winsor_pct=None)
PLANTED = Scenario("AAA", "B", 2000)


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.4f}" for v in values) + "]"


# ------------------------------------------------------------- criterion 1


def test_criterion_1_gradients(criterion):
    t0 = time.perf_counter()
    checked, worst = test_nn._gradient_sweep(108)
    layer_cfgs = [
        MlpConfig((5, 4), "relu", batch_norm=True),
        MlpConfig((6, 3), "leaky_relu", 0.2, dropout_rate=0.3),
        MlpConfig((4,), "leaky_relu", 0.1, batch_norm=True, dropout_rate=0.2),
    ]
    for cfg in layer_cfgs:
        test_nn.test_mlp_parameter_gradients(cfg)
    gp = test_nn.gp_second_order_error()
    dt = time.perf_counter() - t0
    ok = checked >= 100 and worst < 1e-4 and gp < 1e-3 and dt < 60
    criterion(1, ok, f"{checked} shapes, worst rel err {worst:.2e}; GP second order {gp:.2e}; {dt:.1f}s")


# ------------------------------------------------------------- criterion 2

ORACLES = {
    "KS": [test_stats.test_ks_examples, test_stats.test_ks_brute_force],
    "Wilcoxon": [
        test_stats.test_wilcoxon_exact_one_in_twenty,
        test_stats.test_wilcoxon_identical_and_monotone_invariance,
        test_stats.test_wilcoxon_normal_branch_large_n,
    ],
    "Pearson": [test_stats.test_pearson_examples_and_oracle],
    "Mahalanobis": [test_stats.test_mahalanobis_examples_and_oracle],
    "Frechet": [test_stats.test_frechet_examples],
    "JS": [test_stats.test_js_identical_and_disjoint, test_stats.test_js_matches_direct_summation],
    "MAD": [test_stats.test_mad_examples],
    "FE": [
        test_stats.test_fe_planted_coefficients_no_noise,
        test_stats.test_fe_matches_dummy_variable_ols,
        test_stats.test_fe_four_observation_hand_panel,
    ],
}


def test_criterion_2_statistical_oracles(criterion):
    t0 = time.perf_counter()
    failed = []
    for name, checks in ORACLES.items():
        for check in checks:
            try:
                check()
            except AssertionError as exc:
                failed.append(f"{name}: {exc}")
    dt = time.perf_counter() - t0
    detail = f"{len(ORACLES)} estimators, {sum(map(len, ORACLES.values()))} oracle checks, {dt:.1f}s"
    criterion(2, not failed and dt < 60, detail + ("; " + "; ".join(failed) if failed else ""))


# ------------------------------------------------------------- criterion 3


@pytest.mark.slow
def test_criterion_3_fidelity(criterion):
    x, labels = mixture_matrix(2000, seed=0)
    held, held_labels = mixture_matrix(2000, seed=1)
    cfg = GanConfig(epochs=2000, batch_size=64, seed=0, marginal_rescale=True)
    t0 = time.perf_counter()
    model = train(x, labels, cfg)
    dt = time.perf_counter() - t0
    counts = {k: held_labels.count(k) for k in model.condition_vocabulary}
    synth, _ = sample_synthetic(model, counts, make_rng(0, "held-out"))
    js = [js_divergence(held[:, j], synth[:, j]) for j in range(3)]
    ks = [ks_two_sample(held[:, j], synth[:, j]).p_value for j in range(3)]
    ok = max(js) < 0.05 and min(ks) > 0.10
    criterion(3, ok, f"JS {_fmt(js)} (< 0.05), KS p {_fmt(ks)} (> 0.10); training {dt:.0f}s")


# -------------------------------------------------------- criteria 4 and 5


@pytest.fixture(scope="module")
def planted():
    world = planted_world(countries_per_regime=10, seed=0)
    t0 = time.perf_counter()
    model = train_preprocessed(preprocess(world, RAW), DESK)
    full = compute_eds(model, world, PLANTED, seed=DESK.seed, bootstrap_replications=0)
    boot = bootstrap_retrain(world, DESK, PLANTED, replications=20, seed=0, preprocess_config=RAW)
    return world, full, boot, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_4_planted_effect(criterion, planted):
    _, full, boot, dt = planted
    vals = boot.values
    stable = bool(np.all(np.sign(vals) == np.sign(full.eds)))
    ok = 0.15 <= full.eds <= 0.25 and stable and len(vals) == 20 and boot.std < 0.1 and dt < 1800
    criterion(
        4,
        ok,
        f"eds {full.eds:.4f} in [0.15, 0.25]; 20 retrains mean {vals.mean():.4f}, "
        f"std {boot.std:.4f} (< 0.1), min {vals.min():.4f}, sign stable {stable}; {dt:.0f}s",
    )


@pytest.mark.slow
def test_criterion_5_rolling_windows(criterion, planted):
    world, _, boot, _ = planted
    out = rolling_window_eds(world, DESK, PLANTED, DEFAULT_WINDOWS, preprocess_config=RAW)
    vals = np.array([r.eds for r in out.values()])
    spread = float(vals.max() - vals.min())
    same_sign = len(set(np.sign(vals))) == 1
    ok = spread <= 2 * boot.std and same_sign
    criterion(5, ok, f"windows {_fmt(vals)}, spread {spread:.4f} vs 2 x std {2 * boot.std:.4f}; same sign {same_sign}")


# ------------------------------------------------------------- criterion 6


def test_criterion_6_fixed_effects(criterion):
    hits = 0
    for seed in range(100):
        panel, _ = fixed_effects_panel(sigma=0.05, seed=seed)
        t = fixed_effects_regression(panel).t_stats
        hits += t["I"] > 2.58 and t["IxC"] > 2.58
    criterion(6, hits >= 95, f"{hits}/100 trials with t > 2.58 on I and IxC")


# ------------------------------------------------------------- criterion 7


def _report_table(tmp_path, name, extra=""):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(f"out = {tmp_path / name}\ntable_results = builtin:{name}.csv\n{extra}")
    code = cli(["report", "--config", str(cfg)])
    with open(tmp_path / name / "report" / "table.csv", encoding="utf-8") as fh:
        return code, list(csv.reader(fh))


def test_criterion_7_fixtures(criterion, tmp_path):
    c1, t1 = _report_table(tmp_path, "table1")
    c2, t2 = _report_table(tmp_path, "table2", "table_layout = validation\n")
    table1 = c1 == 0 and [r[2:] for r in t1[1:]] == [
        ["0.885", "0.860", "0.566", "-0.294"],
        ["0.217", "0.400", "0.553", "+0.153"],
    ]
    table2 = c2 == 0 and [r[2:] for r in t2[1:]] == [
        ["0.128", "0.520", "0.630"],
        ["0.095", "0.740", "0.610"],
        ["0.054", "0.480", "0.540"],
        ["0.112", "0.700", "0.580"],
    ]
    kinds = []
    for spec, data in test_report._specs():
        a, b = render_figure(spec, data), render_figure(spec, data)
        ET.fromstring(a.encode("utf-8"))
        if a == b:
            kinds.append(spec.kind)
    ok = table1 and table2 and len(kinds) == 4
    criterion(7, ok, f"Table 1 cells {table1}, Table 2 cells {table2}; deterministic SVG: {', '.join(kinds)}")


# ------------------------------------------------------------- criterion 8

PIPELINE_CFG = """\
epochs = 3
generator_widths = 16,8
critic_widths = 16,8
n_draws = 200
eds_bootstrap = 100
bootstrap_replications = 3
calibration_size = 256
seed = 4
out = out
"""


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_end_to_end(criterion, tmp_path, monkeypatch):
    monkeypatch.delenv("CFORGE_SEED", raising=False)
    trees, codes = [], []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        (d / "run.cfg").write_text(PIPELINE_CFG)
        monkeypatch.chdir(d)
        for cmd in ("ingest", "train", "eds", "validate", "robustness", "report"):
            codes.append(cli([cmd, "--config", "run.cfg"]))
        trees.append(_tree(d / "out"))
    same = trees[0] == trees[1]
    ok = same and all(c == 0 for c in codes) and len(trees[0]) > 10
    criterion(8, ok, f"{len(trees[0])} files, exit codes {sorted(set(codes))}, byte-identical {same}")
