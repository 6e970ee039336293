"""Command-line front end: ``cforge {ingest,train,eds,validate,robustness,report}``.

Outputs land in ``<out>/<subcommand>/``; the resolved configuration is echoed
to ``<out>/resolved_config.txt``. Seed precedence: ``--seed`` flag, then the
``CFORGE_SEED`` environment variable, then the config file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from ..eds import (
    EdsResult,
    Scenario,
    compute_eds,
    counterfactual_draws,
    development_index,
    model_index,
    observed_index,
    parse_scenarios,
    read_results,
    scenario_rng,
    write_results,
)
from ..errors import CforgeError, ConfigError, DataError, UsageError
from ..panel import Panel, RegimeScheme, load_panel, load_regime_scheme, pca_fit, preprocess
from ..rng import make_rng
from ..stats.fixed_effects import fixed_effects_regression
from ..stats.robustness import (
    benchmark_correlations,
    bootstrap_retrain,
    mad_exclusions,
    rolling_window_eds,
    scheme_sensitivity,
)
from ..stats.validation import sig6, validate_fidelity
from ..wgan import (
    generate,
    load_checkpoint,
    sample_latent,
    sample_synthetic,
    save_checkpoint,
    train_preprocessed,
    write_training_log,
)
from .config import RunConfig, load_config
from .figures import FigureSpec, render_figure
from .tables import country_name, render_table_csv, render_table_json

SUBCOMMANDS = ("ingest", "train", "eds", "validate", "robustness", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cforge", description="Generative counterfactual engine.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="global seed (overrides CFORGE_SEED and the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="tabular output format")
    return p


# ------------------------------------------------------------------ helpers


def resolve_path(path: str):
    if path.startswith("builtin:"):
        return resources.files("cforge").joinpath("data", path[len("builtin:"):])
    return Path(path)


def _open_source(path: str) -> bytes:
    try:
        return resolve_path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    env = os.environ.get("CFORGE_SEED")
    if env is not None and env.strip():
        try:
            cfg.set("seed", int(env))
        except ValueError:
            raise ConfigError(f"CFORGE_SEED must be an integer, got {env!r}") from None
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.out is not None:
        cfg.set("out", args.out)
    if args.format is not None:
        cfg.set("format", args.format)
    return cfg


def load_inputs(cfg: RunConfig) -> Panel:
    panel = load_panel(_open_source(cfg.panel))
    if cfg.scheme:
        scheme = load_regime_scheme(_open_source(cfg.scheme), "custom")
        scheme.covers(panel)
        panel = panel.with_regimes(scheme.assignment)
    return panel


def baseline_scheme(panel: Panel) -> RegimeScheme:
    assignment = {}
    for r in panel.records:
        assignment.setdefault(r.country, r.regime)
    return RegimeScheme("geographic", assignment)


def alt_schemes(cfg: RunConfig) -> list[RegimeScheme]:
    out = []
    for item in cfg.alt_schemes.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"alt_schemes entry {item!r} must look like name=path")
        name, path = (s.strip() for s in item.split("=", 1))
        sim = _open_source(cfg.network_similarity) if name == "network" else None
        out.append(load_regime_scheme(_open_source(path), name, sim))
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _g(v) -> str:
    return "" if v is None else f"{v:.6g}"


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _checkpoint_path(cfg: RunConfig) -> Path:
    return Path(cfg.out) / "train" / "checkpoint.json"


def _load_model(cfg: RunConfig):
    path = _checkpoint_path(cfg)
    if not path.exists():
        raise DataError(f"no checkpoint at {path}; run train first")
    return load_checkpoint(path)


def _scenarios(cfg: RunConfig) -> list[Scenario]:
    return parse_scenarios(cfg.scenarios, cfg.n_draws, cfg.index_mode)


def _result_dict(r: EdsResult) -> dict:
    return {
        "country": r.country,
        "scenario": r.scenario,
        "eds": sig6(r.eds),
        "variance": sig6(r.variance),
        "mean_real": sig6(r.mean_real),
        "mean_cf": sig6(r.mean_cf),
        "delta_development": sig6(r.delta_development),
        "n_draws": r.n_draws,
        "ci_low": sig6(r.ci_low),
        "ci_high": sig6(r.ci_high),
        "p_value": sig6(r.p_value),
    }


# -------------------------------------------------------------- subcommands


def cmd_ingest(cfg: RunConfig, out: Path) -> None:
    panel = load_inputs(cfg)
    prep = preprocess(panel, cfg.preprocess_config())
    imputed = {}
    unresolved = {}
    for c, _, _ in prep.log.imputed:
        imputed[c] = imputed.get(c, 0) + 1
    for c, _, _ in prep.log.unresolved:
        unresolved[c] = unresolved.get(c, 0) + 1
    header = ("country", "regime", "n_years", "first_year", "last_year", "imputed", "unresolved")
    rows = []
    for c in panel.countries:
        sub = panel.for_country(c)
        years = sub.years
        rows.append([c, sub.records[0].regime, len(sub), min(years), max(years), imputed.get(c, 0), unresolved.get(c, 0)])
    log_rows = [[c, y, v, "imputed"] for c, y, v in prep.log.imputed]
    log_rows += [[c, y, v, "unresolved"] for c, y, v in prep.log.unresolved]
    if cfg.format == "json":
        _write(out / "summary.json", _json_text({
            "countries": [dict(zip(header, r)) for r in rows],
            "imputation": [dict(zip(("country", "year", "variable", "status"), r)) for r in log_rows],
            "n_records": len(panel),
            "n_complete": int(prep.normalized.shape[0]),
        }))
    else:
        _write(out / "summary.csv", _csv_text(header, rows))
        _write(out / "imputation.csv", _csv_text(("country", "year", "variable", "status"), log_rows))


def cmd_train(cfg: RunConfig, out: Path) -> None:
    panel = load_inputs(cfg)
    model = train_preprocessed(preprocess(panel, cfg.preprocess_config()), cfg.gan_config())
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.json")
    buf = io.StringIO()
    write_training_log(model, buf)
    _write(out / "training_log.csv", buf.getvalue())


def cmd_eds(cfg: RunConfig, out: Path) -> None:
    panel = load_inputs(cfg)
    model = _load_model(cfg)
    results = [compute_eds(model, panel, sc, cfg.seed, cfg.eds_bootstrap) for sc in _scenarios(cfg)]
    if cfg.format == "json":
        _write(out / "results.json", _json_text([_result_dict(r) for r in results]))
    else:
        buf = io.StringIO()
        write_results(results, buf)
        _write(out / "results.csv", buf.getvalue())


def cmd_validate(cfg: RunConfig, out: Path) -> None:
    panel = load_inputs(cfg)
    model = _load_model(cfg)
    prep = preprocess(panel, cfg.preprocess_config())
    counts = {lab: prep.regimes.count(lab) for lab in model.condition_vocabulary}
    synth, _ = sample_synthetic(model, counts, make_rng(cfg.seed, "validate"))
    report = validate_fidelity(prep.normalized, synth, bins=cfg.js_bins, epsilon=cfg.js_epsilon, ridge=cfg.mahalanobis_ridge)
    if cfg.format == "json":
        _write(out / "validation.json", report.to_json())
    else:
        buf = io.StringIO()
        report.write_csv(buf)
        _write(out / "validation.csv", buf.getvalue())


def _all_country_scenarios(panel: Panel, cfg: RunConfig) -> list[Scenario]:
    base = baseline_scheme(panel)
    regimes = sorted(set(base.assignment.values()))
    return [
        Scenario(c, target, cfg.n_draws, cfg.index_mode)
        for c in sorted(base.assignment)
        for target in regimes
        if target != base.assignment[c]
    ]


def cmd_robustness(cfg: RunConfig, out: Path) -> None:
    panel = load_inputs(cfg)
    gan, prep_cfg = cfg.gan_config(), cfg.preprocess_config()
    rolling_rows, boot_rows, boot_summary = [], [], []
    for sc in _scenarios(cfg):
        windows = rolling_window_eds(panel, gan, sc, cfg.windows_list(), prep_cfg, n_jobs=cfg.n_jobs)
        for (a, b), r in windows.items():
            rolling_rows.append([sc.label, f"{a}-{b}", _g(r.eds), _g(r.mean_real), _g(r.mean_cf)])
        boot = bootstrap_retrain(
            panel, gan, sc, cfg.bootstrap_replications, cfg.subsample_frac, cfg.seed, prep_cfg, n_jobs=cfg.n_jobs
        )
        for rep, v in zip(boot.replications, boot.eds):
            boot_rows.append([sc.label, rep, _g(v)])
        boot_summary.append([sc.label, len(boot.eds), len(boot.skipped), _g(boot.std), _g(boot.ci_low), _g(boot.ci_high)])

    scenario_set = _all_country_scenarios(panel, cfg)
    schemes = [baseline_scheme(panel)] + alt_schemes(cfg)
    sens = scheme_sensitivity(panel, gan, scenario_set, schemes, prep_cfg)
    scheme_rows = [[a] + [_g(sens.correlation[i, j]) for j in range(len(sens.names))] for i, a in enumerate(sens.names)]
    base_eds: dict[str, list[float]] = {}
    for sc, v in zip(scenario_set, sens.eds[0]):
        base_eds.setdefault(sc.country, []).append(float(v))
    eds_by_country = {c: float(np.mean(v)) for c, v in sorted(base_eds.items())}
    bench = benchmark_correlations(eds_by_country, panel)
    excluded = mad_exclusions(eds_by_country, cfg.mad_threshold)
    fe = fixed_effects_regression(panel, cfg.fe_interaction, cfg.fe_outcome)
    fe_rows = [[k, _g(fe.beta[k]), _g(fe.std_errors[k]), _g(fe.t_stats[k])] for k in fe.beta]

    if cfg.format == "json":
        _write(out / "robustness.json", _json_text({
            "rolling": [dict(zip(("scenario", "window", "eds", "mean_real", "mean_cf"), r)) for r in rolling_rows],
            "bootstrap": [dict(zip(("scenario", "kept", "skipped", "std", "ci_low", "ci_high"), r)) for r in boot_summary],
            "scheme_correlations": {
                f"{a}~{b}": sig6(sens.correlation[i, j])
                for i, a in enumerate(sens.names)
                for j, b in enumerate(sens.names)
                if i < j
            },
            "benchmark_correlations": {k: sig6(v) for k, v in bench.items()},
            "mad_excluded": excluded,
            "fixed_effects": {
                "coefficients": {r[0]: dict(zip(("beta", "std_error", "t"), r[1:])) for r in fe_rows},
                "r_squared_within": sig6(fe.r_squared_within),
                "n_obs": fe.n_obs,
            },
        }))
        return
    _write(out / "rolling.csv", _csv_text(("scenario", "window", "eds", "mean_real", "mean_cf"), rolling_rows))
    _write(out / "bootstrap.csv", _csv_text(("scenario", "replication", "eds"), boot_rows))
    _write(out / "bootstrap_summary.csv", _csv_text(("scenario", "kept", "skipped", "std", "ci_low", "ci_high"), boot_summary))
    _write(out / "scheme_correlations.csv", _csv_text(("scheme", *sens.names), scheme_rows))
    _write(
        out / "scheme_eds.csv",
        _csv_text(("scenario", *sens.names), [[lab, *(_g(v) for v in sens.eds[:, k])] for k, lab in enumerate(sens.scenarios)]),
    )
    _write(out / "benchmarks.csv", _csv_text(("metric", "pearson_r"), [[k, _g(v)] for k, v in bench.items()]))
    _write(
        out / "mad_screen.csv",
        _csv_text(("country", "eds", "excluded"), [[c, _g(v), str(c in excluded).lower()] for c, v in eds_by_country.items()]),
    )
    _write(out / "fixed_effects.csv", _csv_text(("term", "beta", "std_error", "t"), fe_rows))


def _figures(cfg: RunConfig, out: Path) -> list[str]:
    panel = load_inputs(cfg)
    model = _load_model(cfg)
    mode = cfg.index_mode
    scenarios = _scenarios(cfg)
    written = []

    traj = {}
    names = []
    for sc in scenarios:
        if sc.country in traj:
            continue
        sub = panel.for_country(sc.country)
        d = observed_index(model, sub, sc.country, mode)
        years = [r.year for r in sub.records if not any(v is None for v in r.triplet())]
        name = country_name(sc.country)
        traj[name] = np.column_stack([years, d])
        names.append(name)
    spec = FigureSpec("trajectory", tuple(names), "Year", "Development index", "Observed development trajectories")
    _write(out / "trajectory.svg", render_figure(spec, traj))
    written.append("trajectory.svg")

    regimes = list(model.condition_vocabulary)
    cf_mean_triplet = {}
    cf_mean_index = {}
    index_fit = model_index(model, mode)
    for reg in regimes:
        rng = make_rng(cfg.seed, "report", reg)
        gen = generate(model, sample_latent(cfg.n_draws, model.config.latent_dim, rng), reg)
        cf_mean_triplet[reg] = gen.mean(axis=0)
        cf_mean_index[reg] = float(np.mean(development_index(gen, mode, index_fit)))

    norm_rows, labels_c, regime_c = [], [], []
    for c in panel.countries:
        raw = panel.for_country(c).triplets()
        raw = raw[~np.any(np.isnan(raw), axis=1)]
        if raw.shape[0] == 0:
            continue
        norm_rows.append(np.clip(model.fitted_transforms.normalize(raw), 0.0, 1.0))
        labels_c.append(c)
        regime_c.append(panel.for_country(c).records[0].regime)
    all_norm = np.vstack(norm_rows)
    pca = pca_fit(all_norm, 2)
    real_pts, cf_pts, labels = [], [], []
    for c, reg, rows in zip(labels_c, regime_c, norm_rows):
        for target in regimes:
            if target == reg:
                continue
            real_pts.append(pca.transform(rows.mean(axis=0, keepdims=True))[0])
            cf_pts.append(pca.transform(cf_mean_triplet[target][None, :])[0])
            labels.append(f"{c}->{target}")
    spec = FigureSpec("embedding_map", ("real", "counterfactual"), "Z1", "Z2", "Real and counterfactual positions")
    _write(out / "embedding_map.svg", render_figure(spec, {"real": real_pts, "counterfactual": cf_pts, "labels": labels}))
    written.append("embedding_map.svg")

    sc = scenarios[0]
    real_d = observed_index(model, panel, sc.country, mode)
    draws = counterfactual_draws(model, sc.target_regime, sc.n_draws, scenario_rng(cfg.seed, sc), mode)
    real_name = f"Real ({country_name(sc.country)})"
    cf_name = f"Counterfactual ({sc.target_regime})"
    spec = FigureSpec("density", (real_name, cf_name), "Development index", "Density", "Real vs counterfactual", grid_points=cfg.density_points)
    _write(out / "density.svg", render_figure(spec, {real_name: real_d, cf_name: draws}))
    written.append("density.svg")

    records = []
    for c, reg, rows in zip(labels_c, regime_c, norm_rows):
        d_rows = development_index(rows, mode, index_fit)
        for target in regimes:
            if target == reg:
                continue
            for row, d in zip(rows, np.atleast_1d(d_rows)):
                records.append((row[0], row[1], cf_mean_index[target] - d))
    spec = FigureSpec(
        "heatmap", ("records",), "Institutional quality", "Economic complexity", "Counterfactual change by alignment",
        bins=(cfg.heatmap_bins_i, cfg.heatmap_bins_c),
    )
    _write(out / "heatmap.svg", render_figure(spec, {"records": records}))
    written.append("heatmap.svg")
    return written


def cmd_report(cfg: RunConfig, out: Path) -> None:
    root = Path(cfg.out)
    written = []
    source = cfg.table_results
    if not source:
        source = str(root / "eds" / "results.csv")
        if not Path(source).exists():
            raise DataError(f"no EDS results at {source}; run eds with format csv or set table_results")
    results = read_results(io.StringIO(_open_source(source).decode("utf-8")))
    if cfg.format == "json":
        _write(out / "table.json", render_table_json(results, cfg.table_layout))
        written.append("table.json")
    else:
        _write(out / "table.csv", render_table_csv(results, cfg.table_layout))
        written.append("table.csv")
    if _checkpoint_path(cfg).exists():
        written += _figures(cfg, out)
    _write(out / "manifest.txt", "".join(f"{name}\n" for name in sorted(written)))


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eds": cmd_eds,
    "validate": cmd_validate,
    "robustness": cmd_robustness,
    "report": cmd_report,
}


def cli(argv=None) -> int:
    sub = None
    try:
        args = build_parser().parse_args(argv)
        sub = args.subcommand
        cfg = resolve_config(args)
        root = Path(cfg.out)
        _write(root / "resolved_config.txt", cfg.to_text())
        COMMANDS[sub](cfg, root / sub)
    except CforgeError as exc:
        where = f"[{sub}] " if sub else ""
        print(f"{exc.code}: {where}{exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FloatingPointError) as exc:
        where = f"[{sub}] " if sub else ""
        print(f"E_DATA: {where}{exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(cli())
