"""Empirical predictive distributions reconstructed from ensembles.

An ensemble of K samples stands in for the full predictive distribution:
its step ECDF gives cumulative probabilities, and linear interpolation on
the plotting positions p_k = (k - 0.5)/K gives quantiles, confidence
intervals at any level, histograms and moment/divergence summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm


@dataclass(frozen=True)
class IntervalEstimate:
    """Central interval [lower, upper] covering ``level`` predictive mass."""

    lower: float
    upper: float
    level: float


@dataclass(frozen=True)
class DistSummary:
    """Moment diagnostics plus binned KL divergence to the standard normal."""

    mean: float
    stddev: float
    skewness: float
    excess_kurtosis: float
    kl_to_std_normal: float


def quantile_matrix(sorted_rows: np.ndarray, alphas) -> np.ndarray:
    """Plotting-position quantiles for many ensembles at once.

    Linear interpolation on p_k = (k - 0.5)/K, clamped to the sample range.
    This is the single quantile convention used across the package (PICP,
    QICE and the per-distribution queries all route through it).

    Args:
        sorted_rows: (n, K) array, each row ascending.
        alphas: scalar or (A,) probabilities in (0, 1).

    Returns:
        (n, A) array (or (n,) for scalar input).
    """
    rows = np.asarray(sorted_rows, dtype=float)
    squeeze_rows = rows.ndim == 1
    if squeeze_rows:
        rows = rows[None, :]
    a = np.asarray(alphas, dtype=float)
    scalar_alpha = a.ndim == 0
    a = np.atleast_1d(a)
    if np.any((a <= 0.0) | (a >= 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    k = rows.shape[1]
    pp = (np.arange(k) + 0.5) / k
    idx = np.searchsorted(pp, a)
    lo = np.clip(idx - 1, 0, k - 1)
    hi = np.clip(idx, 0, k - 1)
    denom = pp[hi] - pp[lo]
    safe = np.where(denom > 0.0, denom, 1.0)
    w = np.clip(np.where(denom > 0.0, (a - pp[lo]) / safe, 0.0), 0.0, 1.0)
    out = rows[:, lo] * (1.0 - w) + rows[:, hi] * w
    if scalar_alpha:
        out = out[:, 0]
    if squeeze_rows:
        out = out[0]
    return out


class EmpiricalDistribution:
    """Immutable ascending-sorted sample set with CDF/quantile accessors."""

    __slots__ = ("_samples",)

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=float), kind="stable")
        if s.ndim != 1 or s.size < 1:
            raise ValueError("need a non-empty 1-D sample array")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "_samples", s)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalDistribution is immutable")

    @property
    def sorted_samples(self) -> np.ndarray:
        return self._samples

    @property
    def size(self) -> int:
        return self._samples.size

    def cdf(self, t):
        """Step ECDF: fraction of samples <= t (right-continuous)."""
        counts = np.searchsorted(self._samples, t, side="right")
        return counts / self.size

    def quantile(self, alpha):
        """Plotting-position quantile(s); see :func:`quantile_matrix`."""
        return quantile_matrix(self._samples, alpha)

    def confidence_interval(self, level: float) -> IntervalEstimate:
        """Central interval between the (1-level)/2 and 1-(1-level)/2 quantiles."""
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        tail = (1.0 - level) / 2.0
        lo, hi = self.quantile(np.array([tail, 1.0 - tail]))
        return IntervalEstimate(float(lo), float(hi), float(level))

    def histogram(self, bins: int) -> list[tuple[float, float, int]]:
        """Equal-width bins over [min, max]; counts sum to K.

        The rightmost bin is closed on both sides; a degenerate sample
        range collapses to a single bin holding everything.
        """
        if bins < 1:
            raise ValueError("bins must be >= 1")
        s = self._samples
        lo, hi = float(s[0]), float(s[-1])
        if lo == hi:
            return [(lo, hi, int(s.size))]
        counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
        return [
            (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)
        ]

    def summary(self, kl_bins: int = 50) -> DistSummary:
        """Moments plus binned KL divergence against the standard normal.

        Skewness and excess kurtosis use standardized central moments
        (normal => 0 for both); stddev uses the K-1 denominator.  The KL
        term bins the samples into ``kl_bins`` equal cells over [-5, 5]
        plus two outer tails and compares bin masses with the normal
        density integrated over the same cells.  Degenerate (zero
        variance) sample sets report infinite KL.  Samples should be
        standardized by the caller when the comparison target is the
        standard normal.
        """
        if self.size < 4:
            raise ValueError("summary needs K >= 4 samples for the kurtosis term")
        if kl_bins < 1:
            raise ValueError("kl_bins must be >= 1")
        s = self._samples
        mean = float(s.mean())
        stddev = float(s.std(ddof=1))
        centered = s - mean
        m2 = float(np.mean(centered**2))
        if m2 == 0.0:
            skew, exkurt = 0.0, -3.0
        else:
            skew = float(np.mean(centered**3) / m2**1.5)
            exkurt = float(np.mean(centered**4) / m2**2 - 3.0)
        return DistSummary(mean, stddev, skew, exkurt, self._kl_to_std_normal(kl_bins))

    def _kl_to_std_normal(self, kl_bins: int) -> float:
        s = self._samples
        if s[0] == s[-1]:
            return float("inf")  # point mass vs a continuous reference
        inner = np.linspace(-5.0, 5.0, kl_bins + 1)
        edges = np.concatenate(([-np.inf], inner, [np.inf]))
        counts, _ = np.histogram(s, bins=edges)
        p = counts / s.size
        q = np.diff(norm.cdf(edges))
        occupied = p > 0.0
        if np.any(q[occupied] <= 0.0):
            return float("inf")
        return float(np.sum(p[occupied] * np.log(p[occupied] / q[occupied])))
