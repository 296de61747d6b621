"""Goodness of fit, matrix correlation, binning and scaling-law estimators."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DataError, DegenerateMatrixError, DomainError, NoVariationError,
                     SparseBinError, TailSaturationError)


@dataclass
class GofReport:
    statistic_raw: float
    statistic_scaled: float
    n: int
    family: str = ""
    test: str = "ks"


@dataclass
class MantelReport:
    r: float
    p: float
    permutations: int


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    stderr: float
    bins: str
    range: tuple
    table: np.ndarray = field(default=None, repr=False)


def _finite_sorted(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.shape[0] < 1:
        raise DataError("need at least one sample")
    if not np.all(np.isfinite(x)):
        raise DataError("samples must be finite")
    return np.sort(x)


def ks_test(samples, model_cdf, family: str = "") -> GofReport:
    """One-sample Kolmogorov-Smirnov distance.

    Returns the raw sup-distance ``D`` and ``sqrt(n) * D``.
    """
    x = _finite_sorted(samples)
    n = x.shape[0]
    f = np.asarray(model_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return GofReport(d, math.sqrt(n) * d, n, family, "ks")


def ad_test(samples, model_cdf, family: str = "") -> GofReport:
    """Anderson-Darling A^2 against a fully specified CDF."""
    x = _finite_sorted(samples)
    n = x.shape[0]
    f = np.asarray(model_cdf(x), dtype=float)
    bad = np.flatnonzero((f <= 0) | (f >= 1))
    if bad.size:
        raise TailSaturationError(
            f"model CDF is {f[bad[0]]} at sample point {x[bad[0]]!r}", point=float(x[bad[0]]))
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (np.log(f) + np.log1p(-f[::-1])))
    a2 = float(-n - s / n)
    return GofReport(a2, a2, n, family, "ad")


def ks_two_sample(x, y) -> float:
    """Two-sample Kolmogorov-Smirnov distance."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.shape[0]
    fy = np.searchsorted(y, grid, side="right") / y.shape[0]
    return float(np.max(np.abs(fx - fy)))


# ---------------------------------------------------------------------------
# Mantel


def _upper(mat):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError("Mantel test needs square matrices")
    return mat


def mantel_test(A, B, permutations: int = 999, rng: np.random.Generator | None = None,
                exhaustive: bool = False) -> MantelReport:
    """One-sided Mantel test of the upper-triangle correlation of A and B.

    Rows and columns of ``B`` are permuted together. The p-value counts the
    identity, ``p = (1 + #{r* >= r}) / (permutations + 1)``. With
    ``exhaustive=True`` all ``n!`` relabelings are enumerated instead and
    ``p = #{r* >= r} / n!`` (the identity is one of them).
    """
    A, B = _upper(A), _upper(B)
    n = A.shape[0]
    if B.shape != A.shape:
        raise DomainError("matrices must have the same shape")
    if n < 3:
        raise DomainError("Mantel test needs n >= 3")
    if not (np.allclose(A, A.T) and np.allclose(B, B.T)):
        raise DomainError("matrices must be symmetric")
    iu = np.triu_indices(n, 1)
    a = A[iu]
    if np.ptp(a) == 0 or np.ptp(B[iu]) == 0:
        raise DegenerateMatrixError("off-diagonal entries have zero variance")
    a_c = a - a.mean()
    a_c /= np.linalg.norm(a_c)
    b = B[iu]
    mean_b = b.mean()
    norm_b = np.linalg.norm(b - mean_b)
    r = float(np.clip(np.dot(a_c, (b - mean_b) / norm_b), -1.0, 1.0))

    def permuted_r(perm):
        bp = B[np.ix_(perm, perm)][iu]
        return np.dot(a_c, bp - mean_b) / norm_b

    tol = 1e-12
    if exhaustive:
        perms = itertools.permutations(range(n))
        hits = total = 0
        for perm in perms:
            total += 1
            hits += permuted_r(np.array(perm)) >= r - tol
        return MantelReport(r, hits / total, total)

    if permutations < 0:
        raise DomainError("permutations must be >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    hits = 0
    for _ in range(permutations):
        hits += permuted_r(rng.permutation(n)) >= r - tol
    return MantelReport(r, (hits + 1) / (permutations + 1), permutations)


# ---------------------------------------------------------------------------
# distributions for plotting


def ccdf(samples) -> np.ndarray:
    """Points ``(value, P(X >= value))`` at the sorted distinct values."""
    x = _finite_sorted(samples)
    vals, first = np.unique(x, return_index=True)
    tail = (x.shape[0] - first) / x.shape[0]
    return np.column_stack([vals, tail])


def log_bin(samples, bins_per_decade: int = 10) -> np.ndarray:
    """Histogram on geometric bins, normalized as a density.

    Returns rows ``(geometric centre, density, width)``; empty bins omitted.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.shape[0] == 0:
        raise DataError("need at least one sample")
    if np.any(x <= 0):
        raise DomainError("log binning needs positive samples")
    if bins_per_decade < 1:
        raise DomainError("bins_per_decade must be >= 1")
    lo = math.floor(math.log10(x.min()) * bins_per_decade)
    hi = math.ceil(math.log10(x.max()) * bins_per_decade)
    if hi == lo:
        hi += 1
    edges = 10.0 ** (np.arange(lo, hi + 1) / bins_per_decade)
    # pin the outer edges so no sample falls outside through rounding
    edges[0] = min(edges[0], x.min())
    edges[-1] = max(edges[-1], x.max())
    counts, _ = np.histogram(x, edges)
    width = np.diff(edges)
    keep = counts > 0
    centre = np.sqrt(edges[:-1] * edges[1:])
    dens = counts / (x.shape[0] * width)
    return np.column_stack([centre[keep], dens[keep], width[keep]])


# ---------------------------------------------------------------------------
# scaling relations


def ols(x, y):
    """Least squares ``y = intercept + slope * x``; returns slope, intercept, stderr."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise NoVariationError("regressor has no variation")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    if n > 2:
        resid = y - intercept - slope * x
        stderr = math.sqrt(max(np.sum(resid ** 2), 0.0) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return float(slope), float(intercept), float(stderr)


def fit_size_variance(initial_strengths, growth_rates, n_bins: int = 20, *,
                      binning: str = "log", central: float = 0.9) -> ScalingFit:
    """Fit ``sigma(g) ~ W**-beta``.

    Entities are restricted to the central ``central`` fraction of the W
    distribution, grouped into ``n_bins`` bins (geometric with
    ``binning="log"``, equal-count with ``binning="quantile"``), and
    ln sd(g) is regressed on the mean ln W of each bin. ``exponent`` is beta.
    """
    w = np.asarray(initial_strengths, dtype=float).ravel()
    g = np.asarray(growth_rates, dtype=float).ravel()
    if w.shape != g.shape:
        raise DataError("strengths and growth rates must have equal length")
    if w.shape[0] < 10 * n_bins:
        raise SparseBinError(f"need at least {10 * n_bins} entities for {n_bins} bins")
    if np.any(w <= 0):
        raise DomainError("strengths must be positive")
    tail = (1.0 - central) / 2.0
    lo, hi = np.quantile(w, [tail, 1.0 - tail])
    keep = (w >= lo) & (w <= hi)
    w, g = w[keep], g[keep]
    lw = np.log(w)
    if binning == "log":
        edges = np.linspace(math.log(lo), math.log(hi), n_bins + 1)
    elif binning == "quantile":
        edges = np.quantile(lw, np.linspace(0, 1, n_bins + 1))
    else:
        raise DomainError(f"binning must be 'log' or 'quantile', got {binning!r}")
    idx = np.clip(np.searchsorted(edges, lw, side="right") - 1, 0, n_bins - 1)
    rows = []
    for k in range(n_bins):
        sel = idx == k
        cnt = int(sel.sum())
        if cnt < 3:
            raise SparseBinError(f"bin {k} has {cnt} entities (< 3); use fewer bins")
        rows.append((lw[sel].mean(), g[sel].std(ddof=1), cnt))
    table = np.array(rows)
    if np.any(table[:, 1] <= 0):
        raise NoVariationError("growth rates have zero spread in at least one bin")
    slope, intercept, stderr = ols(table[:, 0], np.log(table[:, 1]))
    return ScalingFit(-slope, intercept, stderr, f"{n_bins} {binning} bins, central {central:g}",
                      (float(lo), float(hi)), table)


def fit_strength_degree(degrees, strengths, *, k_range: tuple | None = None,
                        bins_per_decade: int = 5) -> ScalingFit:
    """Fit ``W ~ K**theta`` by least squares on ln W against ln K.

    ``table`` holds per log-K bin: centre K, mean W, sd W, count.
    """
    k = np.asarray(degrees, dtype=float).ravel()
    w = np.asarray(strengths, dtype=float).ravel()
    if k.shape != w.shape:
        raise DataError("degrees and strengths must have equal length")
    if np.any(k < 1):
        raise DomainError("degrees must be >= 1")
    if np.any(w <= 0):
        raise DomainError("strengths must be positive")
    if k_range is not None:
        sel = (k >= k_range[0]) & (k <= k_range[1])
        k, w = k[sel], w[sel]
    if k.shape[0] == 0 or np.all(k == k[0]):
        raise NoVariationError("degrees do not vary")
    slope, intercept, stderr = ols(np.log(k), np.log(w))
    lo = math.floor(math.log10(k.min()) * bins_per_decade)
    hi = math.ceil(math.log10(k.max()) * bins_per_decade) + 1
    edges = 10.0 ** (np.arange(lo, hi + 1) / bins_per_decade)
    idx = np.searchsorted(edges, k, side="right") - 1
    rows = []
    for b in np.unique(idx):
        sel = idx == b
        rows.append((math.sqrt(edges[b] * edges[b + 1]), w[sel].mean(),
                     w[sel].std(ddof=1) if sel.sum() > 1 else 0.0, int(sel.sum())))
    return ScalingFit(slope, intercept, stderr, f"{bins_per_decade} log-K bins per decade",
                      (float(k.min()), float(k.max())), np.array(rows))


def write_xy(path, rows, header=("x", "y")) -> None:
    lines = ["\t".join(header)]
    for row in np.asarray(rows):
        lines.append("\t".join(f"{v:.12g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
