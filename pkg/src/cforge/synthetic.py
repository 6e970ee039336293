"""Seeded synthetic panels with known structure.

These worlds back the desk-scale experiments: a two-regime world with a
planted +0.2 shift, a two-regime mixture for fidelity checks, a fixed-effects
panel with planted coefficients, and the small demo panel bundled with the
package.
"""

from __future__ import annotations

import string

import numpy as np

from .panel import Panel, PanelRecord, RegimeScheme
from .rng import make_rng

YEARS = tuple(range(1960, 2021))


def country_codes(n: int) -> list[str]:
    """Deterministic distinct ISO-style codes (``AAA``, ``AAB``, ...)."""
    letters = string.ascii_uppercase
    return [letters[(i // 676) % 26] + letters[(i // 26) % 26] + letters[i % 26] for i in range(n)]


def planted_world(
    countries_per_regime: int = 10,
    years=YEARS,
    shift: float = 0.2,
    seed: int = 0,
) -> Panel:
    """Two regimes where every component of regime B is regime A's law
    shifted by ``shift``.

    Regime A components are i.i.d. ``0.1 + 0.5 * Beta(4, 4)``; the law does not
    depend on the year, so any time window sees the same distribution.
    Countries of regime A are named ``A..``, those of B ``B..``.
    """
    rng = make_rng(seed, "planted-world")
    records = []
    for regime in ("A", "B"):
        offset = 0.0 if regime == "A" else shift
        for code in country_codes(countries_per_regime):
            country = regime + code[1:]
            for year in years:
                trip = 0.1 + 0.5 * rng.beta(4.0, 4.0, size=3) + offset
                records.append(PanelRecord(country, int(year), *map(float, trip), regime=regime))
    return Panel(tuple(records))


def mixture_matrix(n_rows: int, seed: int = 0, weights=(0.5, 0.5)):
    """Rows from a two-regime, three-variable mixture inside (0, 1).

    Regime A is centred low with positively correlated components, regime B
    high; returns ``(matrix, labels)``.
    """
    rng = make_rng(seed, "mixture")
    labels = np.where(rng.random(n_rows) < weights[0], "A", "B")
    means = {"A": np.array([0.3, 0.35, 0.3]), "B": np.array([0.65, 0.6, 0.7])}
    chol = np.linalg.cholesky(np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]]))
    z = rng.standard_normal((n_rows, 3)) @ chol.T
    rows = np.array([means[lab] for lab in labels]) + 0.07 * z
    return np.clip(rows, 0.0, 1.0), [str(lab) for lab in labels]


def fixed_effects_panel(
    n_countries: int = 20,
    n_years: int = 20,
    beta=(0.5, 0.3, 0.2, 0.4),
    sigma: float = 0.05,
    seed: int = 0,
) -> tuple[Panel, dict[tuple[str, int], float]]:
    """Panel whose outcome is ``b_I I + b_C C + b_H H + b_IC I*C + a_i + l_t + e``.

    The outcome goes into the ``hdi`` field and is also returned as a map
    keyed by (country, year).
    """
    rng = make_rng(seed, "fixed-effects")
    codes = country_codes(n_countries)
    alpha = rng.normal(0.0, 0.3, n_countries)
    lam = rng.normal(0.0, 0.2, n_years)
    b_i, b_c, b_h = beta[:3]
    b_ic = beta[3] if len(beta) > 3 else 0.0
    records, outcome = [], {}
    for i, code in enumerate(codes):
        for t in range(n_years):
            I, C, H = rng.random(3)
            y = b_i * I + b_c * C + b_h * H + b_ic * I * C + alpha[i] + lam[t] + rng.normal(0.0, sigma)
            year = 1960 + t
            records.append(PanelRecord(code, year, float(I), float(C), float(H), "R", hdi=float(y)))
            outcome[(code, year)] = float(y)
    return Panel(tuple(records)), outcome


# ------------------------------------------------------------- demo data

DEMO_COUNTRIES = {
    # code: (regime, governance label, institutional level, complexity level, schooling level)
    "ESP": ("EUROPE", "HIGH", 1.0, 0.9, 10.0),
    "PRT": ("EUROPE", "HIGH", 0.9, 0.5, 8.5),
    "GRC": ("EUROPE", "MID", 0.6, 0.3, 10.0),
    "FRA": ("EUROPE", "HIGH", 1.3, 1.4, 11.0),
    "ITA": ("EUROPE", "MID", 0.7, 1.2, 10.0),
    "DEU": ("EUROPE", "HIGH", 1.5, 1.9, 12.5),
    "URY": ("LATAM", "HIGH", 0.9, -0.1, 8.5),
    "CHL": ("LATAM", "HIGH", 1.0, 0.0, 9.5),
    "CRI": ("LATAM", "MID", 0.8, 0.2, 8.0),
    "ARG": ("LATAM", "MID", 0.1, 0.0, 9.5),
    "BRA": ("LATAM", "MID", -0.1, 0.3, 7.0),
    "PER": ("LATAM", "LOW", -0.3, -0.4, 8.0),
}


def demo_panel(seed: int = 7, years=range(1960, 2021, 2)) -> Panel:
    """Twelve-country panel in raw units with drift, noise and a few gaps.

    I is a governance score, C an ECI-like score, H mean years of schooling;
    gdp_pc, hdi and eci are filled in as loosely related covariates.
    """
    rng = make_rng(seed, "demo-panel")
    records = []
    years = list(years)
    for code, (regime, _, inst, comp, school) in DEMO_COUNTRIES.items():
        trend = rng.normal(0.01, 0.005)
        for k, year in enumerate(years):
            t = (year - 1990) / 30.0
            i_val = inst + 0.3 * t * (1 if regime == "EUROPE" else 0.5) + rng.normal(0, 0.12)
            c_val = comp + 0.4 * t + rng.normal(0, 0.1)
            h_val = school + 2.0 * t + trend * k + rng.normal(0, 0.25)
            gdp = float(np.exp(9.3 + 0.45 * i_val + 0.35 * c_val + 0.05 * h_val + rng.normal(0, 0.05)))
            hdi = float(np.clip(0.45 + 0.08 * i_val + 0.05 * c_val + 0.02 * h_val + rng.normal(0, 0.01), 0, 1))
            eci = float(c_val + rng.normal(0, 0.05))
            trip = [float(i_val), float(c_val), float(h_val)]
            if rng.random() < 0.02:
                trip[int(rng.integers(3))] = None
            records.append(
                PanelRecord(code, year, *trip, regime=regime, gdp_pc=round(gdp, 2), hdi=round(hdi, 4), eci=round(eci, 4))
            )
    return Panel(tuple(records))


def demo_schemes() -> dict[str, RegimeScheme]:
    """Geographic, governance-tier and network schemes for the demo panel.

    The network similarity is built from institutional levels plus a block
    bonus for countries of the same geographic group.
    """
    codes = list(DEMO_COUNTRIES)
    geo = {c: DEMO_COUNTRIES[c][0] for c in codes}
    gov = {c: DEMO_COUNTRIES[c][1] for c in codes}
    levels = np.array([DEMO_COUNTRIES[c][2] for c in codes])
    block = np.array([[geo[a] == geo[b] for b in codes] for a in codes], dtype=float)
    sim = 0.6 * np.exp(-np.abs(levels[:, None] - levels[None, :])) + 0.4 * block
    sim = np.round(sim, 4)
    np.fill_diagonal(sim, 1.0)
    return {
        "geographic": RegimeScheme("geographic", geo),
        "governance": RegimeScheme("governance", gov),
        "network": RegimeScheme("network", dict(geo), sim, tuple(codes)),
    }


def write_demo_bundle(directory) -> list[str]:
    """Write the demo panel and its regime-scheme files into ``directory``."""
    import csv
    from pathlib import Path

    from .panel import write_panel

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with open(out / "demo_panel.csv", "w", encoding="utf-8", newline="") as fh:
        write_panel(demo_panel(), fh)
    written.append("demo_panel.csv")
    schemes = demo_schemes()
    for name in ("geographic", "governance"):
        with open(out / f"scheme_{name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["country", "regime"])
            for c, lab in schemes[name].assignment.items():
                w.writerow([c, lab])
        written.append(f"scheme_{name}.csv")
    net = schemes["network"]
    with open(out / "similarity_network.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", *net.similarity_countries])
        for c, row in zip(net.similarity_countries, net.similarity):
            w.writerow([c, *(repr(float(v)) for v in row)])
    written.append("similarity_network.csv")
    return written
