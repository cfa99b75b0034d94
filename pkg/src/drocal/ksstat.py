"""Kolmogorov distribution and empirical CDFs for Bonferroni-corrected KS bands."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "kolmogorov_cdf",
    "kolmogorov_quantile",
    "EmpiricalCDF",
    "empirical_cdf",
    "weighted_ks_distance",
    "KSThreshold",
    "threshold",
]

_SERIES_TOL = 1e-14
# Bracket width at which bisection stops. It is far tighter than the
# 1e-10 residual target because K is flat in its upper tail, so a small
# residual alone would leave x loose by ~1e-8.
_BISECT_WIDTH = 1e-13
# K(x) underflows double precision below this point.
_UNDERFLOW_X = 0.04
# Below this point the alternating series needs hundreds of nearly
# cancelling terms; the dual (theta-function) series converges fast there.
_SWITCH_X = 0.6


def kolmogorov_cdf(x: float) -> float:
    """``P(sup |BB(t)| <= x)`` for a standard Brownian bridge ``BB``.

    ``K(x) = 1 - 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)``, truncated once a
    term drops below 1e-14.
    """
    x = float(x)
    if not x >= 0.0:
        raise DomainError(f"kolmogorov_cdf needs x >= 0, got {x}")
    if x < _UNDERFLOW_X:
        return 0.0
    if x < _SWITCH_X:
        # K(x) = sqrt(2 pi)/x * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 x^2))
        s = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x))
            s += term
            if term < _SERIES_TOL:
                break
            k += 1
        return min(1.0, math.sqrt(2 * math.pi) / x * s)
    s = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < _SERIES_TOL:
            break
        k += 1
    return min(1.0, max(0.0, 1.0 - 2.0 * s))


def kolmogorov_quantile(p: float) -> float:
    """Inverse of :func:`kolmogorov_cdf` by bisection."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    while kolmogorov_cdf(hi) < p:
        hi *= 2.0
    while hi - lo > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if kolmogorov_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EmpiricalCDF:
    """Step CDF of a sample, with duplicate values merged into single jumps."""

    values: np.ndarray  # sorted distinct
    cdf: np.ndarray  # F(values[i])
    jumps: np.ndarray  # multiplicity / n
    n: int

    @property
    def left(self) -> np.ndarray:
        """Left limits ``F(x-)`` at each breakpoint."""
        return self.cdf - self.jumps

    def __call__(self, x) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="right")
        return np.where(idx > 0, self.cdf[np.maximum(idx - 1, 0)], 0.0)

    def left_limit(self, x) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="left")
        return np.where(idx > 0, self.cdf[np.maximum(idx - 1, 0)], 0.0)


def empirical_cdf(values) -> EmpiricalCDF:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("empirical_cdf needs at least one value")
    if not np.all(np.isfinite(v)):
        raise DomainError("empirical_cdf got non-finite values")
    uniq, counts = np.unique(v, return_counts=True)
    n = v.size
    cdf = np.cumsum(counts) / n
    cdf[-1] = 1.0
    return EmpiricalCDF(uniq, cdf, counts / n, n)


def weighted_ks_distance(points, weights, ecdf: EmpiricalCDF) -> float:
    """``sup_x |sum_j w_j 1{p_j <= x} - F(x)|`` evaluated exactly.

    Both functions are right-continuous steps, so the supremum is attained
    either at a breakpoint or just left of one; both are checked.
    """
    p = np.asarray(points, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if p.shape != w.shape:
        raise DomainError("points and weights must have the same length")
    if np.any(w < -1e-9) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("weights must lie on the probability simplex")
    order = np.argsort(p, kind="stable")
    ps, ws = p[order], np.cumsum(w[order])

    def wcdf(x, side):
        idx = np.searchsorted(ps, x, side=side)
        return np.where(idx > 0, ws[np.maximum(idx - 1, 0)], 0.0)

    bps = np.union1d(ps, ecdf.values)
    at = np.abs(wcdf(bps, "right") - ecdf(bps))
    before = np.abs(wcdf(bps, "left") - ecdf.left_limit(bps))
    return float(max(at.max(), before.max()))


@dataclass(frozen=True)
class KSThreshold:
    alpha: float
    m: int
    n1: int
    q: float

    @property
    def band(self) -> float:
        return self.q / math.sqrt(self.n1)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "m": self.m, "n1": self.n1, "q": self.q, "band": self.band}


def threshold(alpha: float, m: int, n1: int) -> KSThreshold:
    """Bonferroni-adjusted critical value ``q_{1 - alpha/m}`` and band ``q / sqrt(n1)``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if m < 1 or n1 < 1:
        raise DomainError("m and n1 must be positive")
    return KSThreshold(float(alpha), int(m), int(n1), kolmogorov_quantile(1.0 - alpha / m))
