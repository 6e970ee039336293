"""Two-way (country and year) fixed-effects regression via iterative demeaning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import DataError, RankError
from ..panel import Panel

DEMEAN_TOL = 1e-10
DEMEAN_MAX_ITER = 10_000
COLLINEAR_TOL = 1e-7


@dataclass
class FixedEffectsResult:
    beta: dict[str, float]
    alpha: dict[str, float]
    lambda_: dict[int, float]
    std_errors: dict[str, float]
    r_squared_within: float
    n_obs: int
    dof: int

    @property
    def t_stats(self) -> dict[str, float]:
        return {k: self.beta[k] / self.std_errors[k] for k in self.beta}


def _group_index(keys: Sequence) -> tuple[np.ndarray, int]:
    lookup: dict = {}
    idx = np.empty(len(keys), dtype=int)
    for i, k in enumerate(keys):
        idx[i] = lookup.setdefault(k, len(lookup))
    return idx, len(lookup)


def _group_mean(x: np.ndarray, idx: np.ndarray, n_groups: int, counts: np.ndarray) -> np.ndarray:
    sums = np.zeros((n_groups,) + x.shape[1:])
    np.add.at(sums, idx, x)
    return (sums / counts.reshape((-1,) + (1,) * (x.ndim - 1)))[idx]


def two_way_demean(x: np.ndarray, units, times, tol: float = DEMEAN_TOL) -> np.ndarray:
    """Alternate unit and time demeaning until the update is below ``tol``."""
    ui, nu = _group_index(units)
    ti, nt = _group_index(times)
    uc = np.bincount(ui, minlength=nu).astype(float)
    tc = np.bincount(ti, minlength=nt).astype(float)
    out = np.array(x, dtype=float, copy=True)
    for _ in range(DEMEAN_MAX_ITER):
        out = out - _group_mean(out, ui, nu, uc)
        step = _group_mean(out, ti, nt, tc)
        out = out - step
        if np.max(np.abs(step)) < tol:
            break
    return out


def _check_rank(xd: np.ndarray, x: np.ndarray, names: Sequence[str]) -> None:
    basis = []
    for j, name in enumerate(names):
        col = xd[:, j].copy()
        scale = max(np.linalg.norm(x[:, j]), np.linalg.norm(xd[:, j]), 1e-300)
        for q in basis:
            col -= np.dot(q, col) * q
        norm = np.linalg.norm(col)
        if norm <= COLLINEAR_TOL * scale:
            raise RankError(f"regressor {name!r} is collinear with the fixed effects or earlier regressors")
        basis.append(col / norm)


def _recover_effects(resid: np.ndarray, units, times, tol: float = DEMEAN_TOL):
    ui, nu = _group_index(units)
    ti, nt = _group_index(times)
    uc = np.bincount(ui, minlength=nu).astype(float)
    tc = np.bincount(ti, minlength=nt).astype(float)
    alpha = np.zeros(nu)
    lam = np.zeros(nt)
    for _ in range(DEMEAN_MAX_ITER):
        new_alpha = np.bincount(ui, resid - lam[ti], minlength=nu) / uc
        new_lam = np.bincount(ti, resid - new_alpha[ui], minlength=nt) / tc
        change = max(np.max(np.abs(new_alpha - alpha)), np.max(np.abs(new_lam - lam)))
        alpha, lam = new_alpha, new_lam
        if change < tol:
            break
    return alpha, lam


def within_estimator(
    y,
    X,
    names: Sequence[str],
    units: Sequence,
    times: Sequence,
) -> FixedEffectsResult:
    """OLS of ``y`` on ``X`` after absorbing unit and time intercepts.

    Year effects are normalised so the earliest year has effect zero.
    Standard errors are the conventional homoskedastic ones with the absorbed
    effects counted in the degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    n, k = X.shape
    n_units = len(set(units))
    n_times = len(set(times))
    if n_units < 2 or n_times < 2:
        raise DataError("fixed effects need at least two countries and two years")
    stacked = two_way_demean(np.column_stack([y, X]), units, times)
    yd, xd = stacked[:, 0], stacked[:, 1:]
    _check_rank(xd, X, names)
    coef, *_ = np.linalg.lstsq(xd, yd, rcond=None)
    resid_d = yd - xd @ coef
    ssr = float(resid_d @ resid_d)
    sst = float(yd @ yd)
    dof = n - k - (n_units + n_times - 1)
    if dof > 0:
        sigma2 = ssr / dof
        cov = sigma2 * np.linalg.inv(xd.T @ xd)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        se = np.full(k, math.nan)
    resid = y - X @ coef
    alpha, lam = _recover_effects(resid, units, times)
    unit_keys = list(dict.fromkeys(units))
    time_keys = list(dict.fromkeys(times))
    first = int(np.argmin(np.asarray(time_keys, dtype=float)))
    shift = lam[first]
    lam = lam - shift
    alpha = alpha + shift
    return FixedEffectsResult(
        beta={nm: float(c) for nm, c in zip(names, coef)},
        alpha={u: float(a) for u, a in zip(unit_keys, alpha)},
        lambda_={t: float(v) for t, v in zip(time_keys, lam)},
        std_errors={nm: float(s) for nm, s in zip(names, se)},
        r_squared_within=1.0 - ssr / sst if sst > 0 else math.nan,
        n_obs=n,
        dof=dof,
    )


def fixed_effects_regression(
    panel: Panel,
    include_interaction: bool = True,
    outcome: str | Mapping | Callable = "hdi",
) -> FixedEffectsResult:
    """Regress a development outcome on I, C, H (and I x C) with country and
    year effects.

    ``outcome`` is a panel column name, a mapping ``(country, year) -> value``,
    or a callable taking a record. Rows with any missing value are dropped.
    """
    ys, xs, units, times = [], [], [], []
    for r in panel.records:
        if isinstance(outcome, str):
            yv = getattr(r, outcome)
        elif callable(outcome):
            yv = outcome(r)
        else:
            yv = outcome.get((r.country, r.year))
        row = [r.inst_quality, r.complexity, r.human_capital]
        if yv is None or any(v is None for v in row) or not np.isfinite(yv):
            continue
        if include_interaction:
            row.append(r.inst_quality * r.complexity)
        ys.append(float(yv))
        xs.append(row)
        units.append(r.country)
        times.append(r.year)
    if not ys:
        raise DataError("no complete rows for the fixed-effects regression")
    names = ["I", "C", "H"] + (["IxC"] if include_interaction else [])
    return within_estimator(np.array(ys), np.array(xs), names, units, times)
