"""Country-year panel ingestion and preprocessing.

The pipeline is frozen as impute -> winsorize -> min-max normalize, with an
optional standardize + PCA embedding on top. :class:`FittedTransforms` keeps
every fitted parameter so generated samples can be mapped back to raw units.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSeriesError,
    EmptyInputError,
    ParseError,
    RankError,
    SchemaError,
)

SCHEMA_VERSION = "1"
TRIPLET = ("inst_quality", "complexity", "human_capital")
OPTIONAL = ("gdp_pc", "hdi", "eci", "gini")
NUMERIC = TRIPLET + OPTIONAL
REQUIRED_COLUMNS = ("country", "year", *TRIPLET, "regime")
ALL_COLUMNS = REQUIRED_COLUMNS + OPTIONAL
_ISO3 = re.compile(r"^[A-Z]{3}$")


@dataclass(frozen=True)
class PanelRecord:
    country: str
    year: int
    inst_quality: float | None
    complexity: float | None
    human_capital: float | None
    regime: str
    gdp_pc: float | None = None
    hdi: float | None = None
    eci: float | None = None
    gini: float | None = None

    def __post_init__(self):
        if not _ISO3.match(self.country):
            raise SchemaError(f"country code must be 3 uppercase letters, got {self.country!r}")
        if not self.regime:
            raise SchemaError(f"empty regime label for {self.country},{self.year}")

    def triplet(self) -> tuple:
        return (self.inst_quality, self.complexity, self.human_capital)


@dataclass(frozen=True)
class Panel:
    records: tuple[PanelRecord, ...]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.country, r.year)
            if key in seen:
                raise SchemaError(f"duplicate country-year {r.country},{r.year}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def countries(self) -> list[str]:
        return list(dict.fromkeys(r.country for r in self.records))

    @property
    def years(self) -> list[int]:
        return sorted({r.year for r in self.records})

    def regimes(self) -> list[str]:
        return sorted({r.regime for r in self.records})

    def column(self, name: str) -> np.ndarray:
        """Numeric column as float array with NaN for missing cells."""
        if name not in NUMERIC:
            raise SchemaError(f"unknown variable {name!r}")
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    def triplets(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in TRIPLET])

    def for_country(self, country: str) -> "Panel":
        return Panel(tuple(r for r in self.records if r.country == country), self.schema_version)

    def select(self, predicate) -> "Panel":
        return Panel(tuple(r for r in self.records if predicate(r)), self.schema_version)

    def with_regimes(self, assignment: Mapping[str, str]) -> "Panel":
        missing = sorted(set(self.countries) - set(assignment))
        if missing:
            raise SchemaError(f"regime assignment missing countries: {', '.join(missing)}")
        return Panel(
            tuple(replace(r, regime=assignment[r.country]) for r in self.records),
            self.schema_version,
        )


@dataclass(frozen=True)
class RegimeScheme:
    name: str
    assignment: Mapping[str, str]
    similarity: np.ndarray | None = None
    similarity_countries: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.name not in ("geographic", "governance", "network", "custom"):
            raise SchemaError(f"unknown regime scheme {self.name!r}")
        if self.name == "network" and self.similarity is None:
            raise SchemaError("network scheme requires a similarity matrix")
        if self.similarity is not None:
            s = np.asarray(self.similarity, dtype=float)
            if s.ndim != 2 or s.shape[0] != s.shape[1]:
                raise SchemaError("similarity matrix must be square")
            if not np.allclose(s, s.T, atol=1e-12) or not np.allclose(np.diag(s), 1.0):
                raise SchemaError("similarity matrix must be symmetric with unit diagonal")
            if np.any(s < 0) or np.any(s > 1):
                raise SchemaError("similarity entries must lie in [0, 1]")

    def covers(self, panel: Panel) -> None:
        missing = sorted(set(panel.countries) - set(self.assignment))
        if missing:
            from .errors import SchemeError

            raise SchemeError(f"scheme {self.name!r} has no label for: {', '.join(missing)}")


# ----------------------------------------------------------------- CSV io


def _parse_float(cell: str, column: str, row_no: int) -> float | None:
    cell = cell.strip()
    if cell == "":
        return None
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"row {row_no}: non-numeric value {cell!r} in column {column}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row_no}: non-finite value {cell!r} in column {column}")
    return value


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return open(source, encoding="utf-8", newline="")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def load_panel(source, schema: Mapping[str, str] | None = None) -> Panel:
    """Read a panel from CSV.

    Args:
        source: path, raw bytes, or a binary/text stream of UTF-8 CSV.
        schema: optional map from canonical column name to the header used in
            the file, for adapting upstream exports.
    """
    schema = dict(schema or {})
    stream = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError("empty panel file")
        header = [h.strip() for h in header]
        index = {}
        for canon in ALL_COLUMNS:
            name = schema.get(canon, canon)
            if name in header:
                index[canon] = header.index(name)
            elif canon in REQUIRED_COLUMNS:
                raise SchemaError(f"missing required column {name!r}")
        records = []
        seen: dict[tuple, int] = {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            country = row[index["country"]].strip()
            year_cell = row[index["year"]].strip()
            try:
                year = int(year_cell)
            except ValueError:
                raise ParseError(f"row {row_no}: non-integer year {year_cell!r}") from None
            key = (country, year)
            if key in seen:
                raise SchemaError(f"duplicate country-year {country},{year} (rows {seen[key]} and {row_no})")
            seen[key] = row_no
            values = {
                c: _parse_float(row[index[c]], c, row_no) for c in NUMERIC if c in index
            }
            try:
                records.append(
                    PanelRecord(
                        country=country,
                        year=year,
                        regime=row[index["regime"]].strip(),
                        **values,
                    )
                )
            except SchemaError as exc:
                raise SchemaError(f"row {row_no}: {exc}") from None
    finally:
        stream.close()
    if not records:
        raise EmptyInputError("panel file has no data rows")
    return Panel(tuple(records))


def _fmt_cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_panel(panel: Panel, stream: IO[str], columns: Sequence[str] | None = None) -> None:
    """Write ``panel`` as CSV; floats use shortest round-trip repr."""
    if columns is None:
        present = [c for c in OPTIONAL if any(getattr(r, c) is not None for r in panel.records)]
        columns = list(REQUIRED_COLUMNS) + present
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for r in panel.records:
        row = []
        for c in columns:
            v = getattr(r, c)
            if c in NUMERIC:
                row.append(_fmt_cell(v))
            else:
                row.append(str(v))
        writer.writerow(row)


def load_regime_scheme(source, name: str = "custom", similarity_source=None) -> RegimeScheme:
    """Read a ``country,regime`` CSV, plus a similarity matrix for network schemes."""
    stream = _text_stream(source)
    try:
        rows = list(csv.DictReader(stream))
    finally:
        stream.close()
    if not rows:
        raise EmptyInputError("empty regime scheme file")
    if "country" not in rows[0] or "regime" not in rows[0]:
        raise SchemaError("regime scheme needs country,regime columns")
    assignment = {r["country"].strip(): r["regime"].strip() for r in rows}
    sim = countries = None
    if similarity_source is not None:
        sim, countries = load_similarity(similarity_source)
    return RegimeScheme(name, assignment, sim, countries)


def load_similarity(source) -> tuple[np.ndarray, tuple[str, ...]]:
    stream = _text_stream(source)
    try:
        rows = list(csv.reader(stream))
    finally:
        stream.close()
    if not rows:
        raise EmptyInputError("empty similarity file")
    header = [h.strip() for h in rows[0][1:]]
    body = rows[1:]
    if len(body) != len(header):
        raise SchemaError("similarity matrix must be square")
    mat = np.empty((len(header), len(header)))
    for i, row in enumerate(body):
        if row[0].strip() != header[i]:
            raise SchemaError(f"similarity row {i + 2} is {row[0]!r}, expected {header[i]!r}")
        for j, cell in enumerate(row[1:]):
            mat[i, j] = _parse_float(cell, header[j], i + 2)
    return mat, tuple(header)


# ------------------------------------------------------------ series ops


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    return x


def minmax_normalize(series, constant_policy: str = "error") -> np.ndarray:
    """Map ``series`` affinely onto [0, 1]. Constant series raise unless
    ``constant_policy="half"``, which maps every value to 0.5."""
    x = _as_series(series)
    if x.size == 0:
        raise EmptyInputError("cannot normalize an empty series")
    lo, hi = x.min(), x.max()
    if hi == lo:
        if constant_policy == "half":
            return np.full_like(x, 0.5)
        raise DegenerateSeriesError("constant series has no min-max range")
    return (x - lo) / (hi - lo)


def standardize(series) -> np.ndarray:
    """Zero mean, unit population variance."""
    x = _as_series(series)
    if x.size < 2:
        raise DegenerateSeriesError("standardize needs at least two values")
    mu = x.mean()
    sd = np.sqrt(np.mean((x - mu) ** 2))
    if sd == 0:
        raise DegenerateSeriesError("constant series has zero variance")
    return (x - mu) / sd


def quantile(series, q: float) -> float:
    """Empirical quantile, linear interpolation between order statistics."""
    x = np.sort(_as_series(series))
    if x.size == 0:
        raise EmptyInputError("quantile of an empty series")
    h = (x.size - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def winsorize(series, upper_pct: float = 0.99) -> np.ndarray:
    """Clamp values above the ``upper_pct`` quantile (upper tail only)."""
    if not 0.5 < upper_pct < 1:
        raise ValueError("upper_pct must lie in (0.5, 1)")
    x = _as_series(series)
    if x.size == 0:
        raise EmptyInputError("cannot winsorize an empty series")
    cap = quantile(x, upper_pct)
    return np.minimum(x, cap)


@dataclass
class ImputationLog:
    imputed: list[tuple[str, int, str]] = field(default_factory=list)
    unresolved: list[tuple[str, int, str]] = field(default_factory=list)


def impute_rolling_median(
    panel: Panel, variable: str, window_years: int = 5
) -> tuple[Panel, ImputationLog]:
    """Fill missing ``variable`` cells with the median of the same country's
    observed values within +-(window_years - 1) / 2 years."""
    if variable not in NUMERIC:
        raise SchemaError(f"unknown variable {variable!r}")
    if window_years < 3 or window_years % 2 == 0:
        raise ValueError("window_years must be odd and >= 3")
    half = (window_years - 1) // 2
    observed: dict[str, dict[int, float]] = {}
    for r in panel.records:
        v = getattr(r, variable)
        if v is not None:
            observed.setdefault(r.country, {})[r.year] = v
    log = ImputationLog()
    out = []
    for r in panel.records:
        if getattr(r, variable) is not None:
            out.append(r)
            continue
        obs = observed.get(r.country, {})
        neigh = [v for y, v in obs.items() if abs(y - r.year) <= half]
        if neigh:
            out.append(replace(r, **{variable: float(np.median(neigh))}))
            log.imputed.append((r.country, r.year, variable))
        else:
            out.append(r)
            log.unresolved.append((r.country, r.year, variable))
    return Panel(tuple(out), panel.schema_version), log


# -------------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance_ratio: np.ndarray
    means: np.ndarray

    def transform(self, matrix) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.means) @ self.components

    def inverse_transform(self, scores) -> np.ndarray:
        return np.asarray(scores, dtype=float) @ self.components.T + self.means


def pca_fit(matrix, k: int) -> PcaResult:
    """Top-``k`` principal axes of the column-centred data via SVD.

    Each component is sign-fixed so its largest-magnitude loading is positive.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_fit needs an n x d matrix with n >= 2")
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}]")
    if not np.all(np.isfinite(x)):
        raise ValueError("pca_fit requires finite entries")
    means = x.mean(axis=0)
    centred = x - means
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    tol = max(n, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if k > rank:
        raise RankError(f"requested {k} components but centred matrix has rank {rank}")
    var = s**2
    ratio = var / var.sum()
    comps = vt[:k].T.copy()
    for j in range(k):
        col = comps[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            comps[:, j] = -col
    return PcaResult(comps, ratio[:k].copy(), means)


# ------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class PreprocessConfig:
    impute_window: int = 5
    winsor_pct: float | None = 0.99
    normalization: str = "minmax"  # or "none"
    constant_policy: str = "error"
    latent: str = "triplet"  # or "pca": standardize + PCA scores feed the model
    pca_components: int = 3


@dataclass
class FittedTransforms:
    """Fitted parameters of :func:`preprocess`.

    ``normalize`` maps raw triplets to normalized [0, 1] units, ``to_latent``
    maps normalized triplets to the space the model trains on; each has an
    inverse.
    """

    winsor_caps: np.ndarray
    mins: np.ndarray
    maxs: np.ndarray
    normalization: str = "minmax"
    std_means: np.ndarray | None = None
    std_scales: np.ndarray | None = None
    pca: PcaResult | None = None

    def _span(self) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(span == 0, 1.0, span)

    def normalize(self, raw, clip_winsor: bool = True) -> np.ndarray:
        x = np.asarray(raw, dtype=float)
        if clip_winsor:
            x = np.minimum(x, self.winsor_caps)
        if self.normalization == "none":
            return x.copy()
        out = (x - self.mins) / self._span()
        const = self.maxs == self.mins
        if np.any(const):
            out[..., const] = 0.5
        return out

    def denormalize(self, normalized) -> np.ndarray:
        x = np.asarray(normalized, dtype=float)
        if self.normalization == "none":
            return x.copy()
        return x * self._span() + self.mins

    def to_latent(self, normalized) -> np.ndarray:
        x = np.asarray(normalized, dtype=float)
        if self.pca is None:
            return x.copy()
        return self.pca.transform((x - self.std_means) / self.std_scales)

    def from_latent(self, latent) -> np.ndarray:
        x = np.asarray(latent, dtype=float)
        if self.pca is None:
            return x.copy()
        return self.pca.inverse_transform(x) * self.std_scales + self.std_means

    def to_dict(self) -> dict:
        d = {
            "winsor_caps": self.winsor_caps.tolist(),
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "normalization": self.normalization,
        }
        if self.pca is not None:
            d.update(
                std_means=self.std_means.tolist(),
                std_scales=self.std_scales.tolist(),
                pca_components=self.pca.components.tolist(),
                pca_ratio=self.pca.explained_variance_ratio.tolist(),
                pca_means=self.pca.means.tolist(),
            )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FittedTransforms":
        pca = None
        std_means = std_scales = None
        if "pca_components" in d:
            pca = PcaResult(
                np.array(d["pca_components"], dtype=float),
                np.array(d["pca_ratio"], dtype=float),
                np.array(d["pca_means"], dtype=float),
            )
            std_means = np.array(d["std_means"], dtype=float)
            std_scales = np.array(d["std_scales"], dtype=float)
        return cls(
            np.array(d["winsor_caps"], dtype=float),
            np.array(d["mins"], dtype=float),
            np.array(d["maxs"], dtype=float),
            d.get("normalization", "minmax"),
            std_means,
            std_scales,
            pca,
        )


@dataclass
class Preprocessed:
    """Output of :func:`preprocess`: rows with a complete triplet only."""

    normalized: np.ndarray  # n x 3 in normalized units
    latent: np.ndarray  # n x k, what the model trains on
    regimes: list[str]
    countries: list[str]
    years: list[int]
    imputed: np.ndarray  # n x 3 bool, True where the cell was imputed
    transforms: FittedTransforms
    log: ImputationLog
    dropped: list[tuple[str, int]]


def preprocess(panel: Panel, config: PreprocessConfig | None = None) -> Preprocessed:
    if config is None:
        config = PreprocessConfig()
    if len(panel) == 0:
        raise EmptyInputError("cannot preprocess an empty panel")
    log = ImputationLog()
    was_missing = np.isnan(panel.triplets())
    current = panel
    for var in TRIPLET:
        current, var_log = impute_rolling_median(current, var, config.impute_window)
        log.imputed.extend(var_log.imputed)
        log.unresolved.extend(var_log.unresolved)

    raw = current.triplets()
    complete = ~np.any(np.isnan(raw), axis=1)
    records = [r for r, ok in zip(current.records, complete) if ok]
    dropped = [(r.country, r.year) for r, ok in zip(current.records, complete) if not ok]
    if not records:
        raise EmptyInputError("no complete triplets after imputation")
    raw = raw[complete]
    imputed = was_missing[complete]

    cols = []
    caps = []
    for j in range(3):
        col = raw[:, j]
        if config.winsor_pct is not None:
            cap = quantile(col, config.winsor_pct)
            col = np.minimum(col, cap)
        else:
            cap = np.inf
        caps.append(cap)
        cols.append(col)
    clipped = np.column_stack(cols)
    mins = clipped.min(axis=0)
    maxs = clipped.max(axis=0)
    if config.normalization == "minmax":
        normalized = np.column_stack(
            [minmax_normalize(clipped[:, j], config.constant_policy) for j in range(3)]
        )
    elif config.normalization == "none":
        normalized = clipped.copy()
    else:
        raise ValueError(f"unknown normalization {config.normalization!r}")
    transforms = FittedTransforms(np.array(caps), mins, maxs, config.normalization)

    if config.latent == "pca":
        mu = normalized.mean(axis=0)
        sd = np.sqrt(np.mean((normalized - mu) ** 2, axis=0))
        if np.any(sd == 0):
            raise DegenerateSeriesError("constant column cannot be standardized")
        std = (normalized - mu) / sd
        transforms.std_means, transforms.std_scales = mu, sd
        transforms.pca = pca_fit(std, config.pca_components)
    elif config.latent != "triplet":
        raise ValueError(f"unknown latent mode {config.latent!r}")
    latent = transforms.to_latent(normalized)
    return Preprocessed(
        normalized=normalized,
        latent=latent,
        regimes=[r.regime for r in records],
        countries=[r.country for r in records],
        years=[r.year for r in records],
        imputed=imputed,
        transforms=transforms,
        log=log,
        dropped=dropped,
    )


def panel_from_rows(rows: Iterable[Mapping]) -> Panel:
    return Panel(tuple(PanelRecord(**row) for row in rows))
