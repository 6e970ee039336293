"""Two-sample and distance diagnostics used by the fidelity battery."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..errors import DegenerateSeriesError, NumericError, SampleSizeError, SingularityError

JS_BINS = 50
JS_EPSILON = 1e-10
EXACT_WILCOXON_MAX_N = 12


@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float | None = None
    details: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


def _sample(x, min_size: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < min_size:
        raise SampleSizeError(f"{what} needs at least {min_size} observations, got {arr.size}")
    return arr


def ks_two_sample(a, b) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    The statistic is evaluated on the pooled sample points. The p-value uses
    the Kolmogorov distribution at (sqrt(en) + 0.12 + 0.11 / sqrt(en)) * D with
    en = n_a n_b / (n_a + n_b).
    """
    x = np.sort(_sample(a, 2, "ks_two_sample"))
    y = np.sort(_sample(b, 2, "ks_two_sample"))
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    en = x.size * y.size / (x.size + y.size)
    sq = math.sqrt(en)
    p = float(special.kolmogorov((sq + 0.12 + 0.11 / sq) * d)) if d > 0 else 1.0
    return TestResult("ks", d, min(max(p, 0.0), 1.0), {"n_a": x.size, "n_b": y.size})


def histogram_pair(a, b, bins: int = JS_BINS, epsilon: float = JS_EPSILON):
    """Smoothed probability vectors of ``a`` and ``b`` over shared bins spanning
    the pooled min-max range."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = _sample(a, 1, "js_divergence")
    y = _sample(b, 1, "js_divergence")
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(x, edges)[0].astype(float) + epsilon
    q = np.histogram(y, edges)[0].astype(float) + epsilon
    return p / p.sum(), q / q.sum()


def js_divergence(a, b, bins: int = JS_BINS, epsilon: float = JS_EPSILON) -> float:
    """Jensen-Shannon divergence (natural log) between binned samples."""
    p, q = histogram_pair(a, b, bins, epsilon)
    m = 0.5 * (p + q)
    kl_pm = np.sum(p * np.log(p / m))
    kl_qm = np.sum(q * np.log(q / m))
    return float(max(0.0, 0.5 * kl_pm + 0.5 * kl_qm))


def midranks(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def exact_rank_sum_distribution(ranks, n_a: int) -> dict[float, float]:
    """Null distribution of the rank sum of ``n_a`` items drawn from ``ranks``,
    by enumerating every subset."""
    ranks = list(ranks)
    total = math.comb(len(ranks), n_a)
    counts: dict[float, int] = {}
    for combo in itertools.combinations(ranks, n_a):
        s = float(sum(combo))
        counts[s] = counts.get(s, 0) + 1
    return {w: c / total for w, c in sorted(counts.items())}


def wilcoxon_rank_sum(a, b) -> TestResult:
    """Rank-sum test; ``statistic`` is the midrank sum of ``a``.

    Exact enumeration when n_a + n_b <= 12, otherwise the normal
    approximation with tie-corrected variance and continuity correction.
    ``details`` carries both one-sided p-values.
    """
    x = _sample(a, 3, "wilcoxon_rank_sum")
    y = _sample(b, 3, "wilcoxon_rank_sum")
    na, nb = x.size, y.size
    n = na + nb
    ranks = midranks(np.concatenate([x, y]))
    w = float(ranks[:na].sum())
    if n <= EXACT_WILCOXON_MAX_N:
        dist = exact_rank_sum_distribution(ranks, na)
        tol = 1e-9
        p_less = sum(p for v, p in dist.items() if v <= w + tol)
        p_greater = sum(p for v, p in dist.items() if v >= w - tol)
        method = "exact"
    else:
        mean = na * (n + 1) / 2.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1))
        var = na * nb / 12.0 * ((n + 1) - tie_term)
        if var <= 0:
            p_less = p_greater = 1.0
        else:
            sd = math.sqrt(var)
            p_less = float(special.ndtr((w - mean + 0.5) / sd))
            p_greater = float(special.ndtr(-(w - mean - 0.5) / sd))
        method = "normal"
    p_less = min(1.0, p_less)
    p_greater = min(1.0, p_greater)
    p_two = min(1.0, 2.0 * min(p_less, p_greater))
    return TestResult(
        "wilcoxon_rank_sum",
        w,
        p_two,
        {"p_less": p_less, "p_greater": p_greater, "method": method, "n_a": na, "n_b": nb},
    )


def pearson_corr(x, y) -> float:
    a = np.asarray(x, dtype=float).ravel()
    b = np.asarray(y, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("pearson_corr needs equal-length inputs")
    if a.size < 3:
        raise SampleSizeError("pearson_corr needs at least three pairs")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(np.dot(da, da)))
    sb = math.sqrt(float(np.dot(db, db)))
    if sa == 0 or sb == 0:
        raise DegenerateSeriesError("correlation undefined for a constant series")
    r = float(np.dot(da, db)) / (sa * sb)
    return max(-1.0, min(1.0, r))


def mahalanobis(point, sample_mean, sample_covariance, ridge: float = 0.0) -> float:
    x = np.asarray(point, dtype=float) - np.asarray(sample_mean, dtype=float)
    cov = np.asarray(sample_covariance, dtype=float)
    if ridge:
        cov = cov + ridge * np.eye(cov.shape[0])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularityError("covariance is not positive definite") from None
    if np.min(np.diag(chol)) <= 1e-12 * np.max(np.diag(chol)):
        raise SingularityError("covariance is numerically singular")
    y = np.linalg.solve(chol, x)
    return float(math.sqrt(float(np.dot(y, y))))


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root; eigenvalues in (-1e-8, 0) are clamped to zero."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if np.any(vals < -1e-8):
        raise NumericError(f"matrix not positive semidefinite (min eigenvalue {vals.min():.3g})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_gaussian(a, b) -> float:
    """Frechet distance between Gaussians fitted to two samples (rows are
    observations). Covariances use the n - 1 denominator."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    y = y.reshape(-1, 1) if y.ndim == 1 else y
    d = x.shape[1]
    if x.shape[0] < d + 1 or y.shape[0] < d + 1:
        raise SampleSizeError(f"frechet_gaussian needs at least {d + 1} rows per sample")
    mu_a, mu_b = x.mean(axis=0), y.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(x, rowvar=False))
    cov_b = np.atleast_2d(np.cov(y, rowvar=False))
    root_a = sqrtm_psd(cov_a)
    cross = sqrtm_psd(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(0.0, value)


def mad_outlier_screen(values, threshold: float = 3.0) -> tuple[list[int], list[int]]:
    """Split indices into kept / excluded by the robust z-score
    |x - median| / (1.4826 * MAD).

    When MAD is zero but not every value equals the median, the scale falls
    back to 1.2533 * mean absolute deviation from the median; when every
    value equals the median nothing is excluded.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 3:
        raise SampleSizeError("MAD screen needs at least three values")
    med = float(np.median(x))
    dev = np.abs(x - med)
    mad = float(np.median(dev))
    if mad > 0:
        scale = 1.4826 * mad
    else:
        mean_ad = float(dev.mean())
        if mean_ad == 0:
            return list(range(x.size)), []
        scale = 1.2533 * mean_ad
    z = dev / scale
    kept = [i for i in range(x.size) if z[i] <= threshold]
    excluded = [i for i in range(x.size) if z[i] > threshold]
    return kept, excluded


def quantile_pair(real: np.ndarray, synthetic: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort both columns; interpolate the longer one onto the shorter one's
    plotting positions so their lengths match."""
    r = np.sort(real)
    s = np.sort(synthetic)
    if r.size == s.size:
        return r, s
    n = min(r.size, s.size)
    probs = np.linspace(0.0, 1.0, n)
    r = np.quantile(r, probs) if r.size != n else r
    s = np.quantile(s, probs) if s.size != n else s
    return r, s


def embedding_correlation(real_latents, synthetic_latents, pairing: str = "rank") -> dict:
    """Per-dimension and pooled Pearson r between real and synthetic scores.

    ``pairing="rank"`` pairs values by within-dimension rank (the r of the
    two sorted sequences); ``pairing="row"`` keeps the given row pairing.
    """
    r_mat = np.atleast_2d(np.asarray(real_latents, dtype=float))
    s_mat = np.atleast_2d(np.asarray(synthetic_latents, dtype=float))
    if r_mat.shape[1] != s_mat.shape[1]:
        raise ValueError("latent dimensions differ")
    per_dim = []
    pooled_r, pooled_s = [], []
    for j in range(r_mat.shape[1]):
        if pairing == "rank":
            r, s = quantile_pair(r_mat[:, j], s_mat[:, j])
        elif pairing == "row":
            if r_mat.shape[0] != s_mat.shape[0]:
                raise ValueError("row pairing needs equal row counts")
            r, s = r_mat[:, j], s_mat[:, j]
        else:
            raise ValueError(f"unknown pairing {pairing!r}")
        per_dim.append(pearson_corr(r, s))
        pooled_r.append(r)
        pooled_s.append(s)
    pooled = pearson_corr(np.concatenate(pooled_r), np.concatenate(pooled_s))
    return {"per_dimension": per_dim, "pooled": pooled}
