"""Flat ``key = value`` run configuration with ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..errors import ConfigError
from ..nn import MlpConfig
from ..panel import PreprocessConfig
from ..wgan import GanConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() == "none" else float(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (key, parser, default, documentation)
FIELDS: tuple[tuple[str, Any, Any, str], ...] = (
    # io
    ("panel", str, "builtin:demo_panel.csv", "panel CSV path (builtin: prefix reads bundled data)"),
    ("scheme", str, "", "optional country,regime CSV overriding the panel's regime column"),
    ("alt_schemes", str, "governance=builtin:scheme_governance.csv,network=builtin:scheme_geographic.csv",
     "comma list of name=path regime schemes for the scheme-sensitivity check"),
    ("network_similarity", str, "builtin:similarity_network.csv", "similarity matrix CSV for the network scheme"),
    ("table_results", str, "", "EDS results CSV rendered by report (empty: this run's eds output)"),
    ("table_layout", str, "summary", "summary (with delta column) or validation (without)"),
    ("out", str, "cforge_out", "output directory"),
    ("seed", int, 0, "global seed"),
    ("format", str, "csv", "csv or json for tabular outputs"),
    # preprocessing
    ("impute_window", int, 5, "rolling-median window in years (odd, >= 3)"),
    ("winsor_pct", _opt_float, 0.99, "upper winsorization quantile, or none"),
    ("normalization", str, "minmax", "minmax or none"),
    ("constant_policy", str, "error", "error or half for constant columns"),
    ("latent", str, "triplet", "triplet or pca: what the generator is trained on"),
    ("pca_components", int, 3, "principal components kept when latent = pca"),
    # model
    ("latent_dim", int, 8, "generator noise dimension"),
    ("generator_widths", _ints, (128, 64, 32), "generator hidden widths"),
    ("generator_activation", str, "relu", "relu or leaky_relu"),
    ("generator_leaky_alpha", float, 0.2, "generator leaky slope"),
    ("generator_batch_norm", _bool, True, "batch norm in the generator"),
    ("generator_dropout", float, 0.0, "generator dropout rate"),
    ("critic_widths", _ints, (128, 64, 32), "critic hidden widths"),
    ("critic_activation", str, "leaky_relu", "relu or leaky_relu"),
    ("critic_leaky_alpha", float, 0.2, "critic leaky slope"),
    ("critic_batch_norm", _bool, False, "batch norm in the critic"),
    ("critic_dropout", float, 0.3, "critic dropout rate"),
    ("gp_lambda", float, 10.0, "gradient-penalty weight"),
    ("n_critic", int, 5, "critic steps per generator step"),
    ("batch_size", int, 64, "mini-batch size"),
    ("epochs", int, 15000, "training epochs (passes over all mini-batches)"),
    ("eta", float, 1e-4, "Adam learning rate"),
    ("beta1", float, 0.5, "Adam first-moment decay"),
    ("beta2", float, 0.9, "Adam second-moment decay"),
    ("epsilon", float, 1e-8, "Adam epsilon"),
    ("weight_decay", float, 1e-4, "decoupled weight decay"),
    ("marginal_rescale", _bool, True, "quantile-map generated columns onto training marginals"),
    ("calibration_size", int, 4096, "generated rows used to fit the marginal maps"),
    # scenarios
    ("scenarios", str, "ESP:LATAM,URY:EUROPE", "comma list of COUNTRY:REGIME"),
    ("n_draws", int, 1000, "Monte Carlo draws per scenario"),
    ("index_mode", str, "equal_mean", "equal_mean or pca_first"),
    ("eds_bootstrap", int, 1000, "bootstrap replications over per-draw deltas"),
    # validation
    ("js_bins", int, 50, "shared histogram bins for JS divergence"),
    ("js_epsilon", float, 1e-10, "add-epsilon smoothing of JS histograms"),
    ("mahalanobis_ridge", float, 1e-9, "ridge added to covariance before inversion"),
    # robustness
    ("windows", str, "1960-1980,1980-2000,2000-2020", "rolling windows START-END (last one closed)"),
    ("bootstrap_replications", int, 100, "retraining replications"),
    ("subsample_frac", float, 0.8, "share of countries per retraining replication"),
    ("mad_threshold", float, 3.0, "robust z threshold of the MAD screen"),
    ("fe_outcome", str, "hdi", "outcome column of the fixed-effects benchmark, or index"),
    ("fe_interaction", _bool, True, "include the I x C interaction"),
    ("n_jobs", int, 1, "parallel workers for replications and windows"),
    # figures
    ("density_points", int, 200, "grid points of density curves"),
    ("heatmap_bins_i", int, 5, "heatmap bins along institutional quality"),
    ("heatmap_bins_c", int, 5, "heatmap bins along complexity"),
)

FIELD_INDEX = {f[0]: f for f in FIELDS}

CHOICES = {
    "format": ("csv", "json"),
    "table_layout": ("summary", "validation"),
    "normalization": ("minmax", "none"),
    "constant_policy": ("error", "half"),
    "latent": ("triplet", "pca"),
    "generator_activation": ("relu", "leaky_relu"),
    "critic_activation": ("relu", "leaky_relu"),
    "index_mode": ("equal_mean", "pca_first"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, _, d, _ in FIELDS})

    def __getattr__(self, name: str):
        values = self.__dict__.get("values")
        if values is not None and name in values:
            return values[name]
        raise AttributeError(name)

    def set(self, key: str, raw) -> None:
        if key not in FIELD_INDEX:
            raise ConfigError(f"unknown config key {key!r}")
        parser = FIELD_INDEX[key][1]
        try:
            value = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        if key in CHOICES and value not in CHOICES[key]:
            raise ConfigError(f"{key} must be one of {', '.join(CHOICES[key])}, got {value!r}")
        self.values[key] = value

    # ---------------------------------------------------------- builders

    def gan_config(self) -> GanConfig:
        v = self.values
        try:
            gen = MlpConfig(
                v["generator_widths"],
                v["generator_activation"],
                v["generator_leaky_alpha"],
                v["generator_batch_norm"],
                v["generator_dropout"],
            )
            crit = MlpConfig(
                v["critic_widths"],
                v["critic_activation"],
                v["critic_leaky_alpha"],
                v["critic_batch_norm"],
                v["critic_dropout"],
            )
            return GanConfig(
                latent_dim=v["latent_dim"],
                generator=gen,
                critic=crit,
                gp_lambda=v["gp_lambda"],
                n_critic=v["n_critic"],
                batch_size=v["batch_size"],
                epochs=v["epochs"],
                eta=v["eta"],
                beta1=v["beta1"],
                beta2=v["beta2"],
                epsilon=v["epsilon"],
                weight_decay=v["weight_decay"],
                seed=v["seed"],
                marginal_rescale=v["marginal_rescale"],
                calibration_size=v["calibration_size"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def preprocess_config(self) -> PreprocessConfig:
        v = self.values
        return PreprocessConfig(
            impute_window=v["impute_window"],
            winsor_pct=v["winsor_pct"],
            normalization=v["normalization"],
            constant_policy=v["constant_policy"],
            latent=v["latent"],
            pca_components=v["pca_components"],
        )

    def windows_list(self) -> list[tuple[int, int]]:
        out = []
        for item in self.values["windows"].split(","):
            item = item.strip()
            if not item:
                continue
            try:
                a, b = item.split("-")
                out.append((int(a), int(b)))
            except ValueError:
                raise ConfigError(f"window {item!r} must look like START-END") from None
        return out

    def to_text(self) -> str:
        lines = []
        for key, _, _, doc in FIELDS:
            lines.append(f"# {doc}")
            lines.append(f"{key} = {_fmt(self.values[key])}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in FIELD_INDEX:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        cfg.set(key, value)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)
