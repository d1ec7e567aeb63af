"""Dataset-level calibration and accuracy metrics for ensemble forecasts.

PICP measures the fraction of observations inside a central predictive
interval; QICE measures how evenly observations spread across M
equal-probability quantile bins of their predictive distributions (0 when
perfectly calibrated).  Point metrics (MSE/MAE) score the ensemble mean,
and the mean PWM CRPS scores the whole predictive distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import quantile_matrix
from .scoring import crps_pwm_grad_batch


@dataclass
class MetricsReport:
    """One evaluation's worth of metrics; qice/picp are fractions in [0, 1]."""

    picp: float
    qice: float
    crps_mean: float
    mse: float
    mae: float
    n_rows: int
    nll: float | None = None

    def to_records(self) -> list[tuple[str, float]]:
        rows = [
            ("picp", self.picp),
            ("qice", self.qice),
            ("crps_mean", self.crps_mean),
            ("mse", self.mse),
            ("mae", self.mae),
        ]
        if self.nll is not None:
            rows.append(("nll", self.nll))
        rows.append(("n_rows", float(self.n_rows)))
        return rows

    def to_line(self) -> str:
        return " ".join(f"{name}={value:.10g}" for name, value in self.to_records())


def _as_rows(preds, ys, min_k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(preds, dtype=float)
    if e.ndim == 1:
        e = e[None, :]
    obs = np.atleast_1d(np.asarray(ys, dtype=float))
    if e.ndim != 2:
        raise ValueError("predictions must form an (N, K) array of ensembles")
    if e.shape[0] != obs.shape[0]:
        raise ValueError(f"{e.shape[0]} ensembles but {obs.shape[0]} observations")
    if e.shape[0] < 1:
        raise ValueError("need at least one row")
    if e.shape[1] < min_k:
        raise ValueError(f"each ensemble needs at least {min_k} samples")
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(obs))):
        raise ValueError("predictions and observations must be finite")
    return e, obs


def picp(preds, ys, low_pct: float = 0.025, high_pct: float = 0.975) -> float:
    """Fraction of observations inside the [low_pct, high_pct] quantile interval.

    Defaults to the central 95% interval (2.5th to 97.5th percentile); a
    calibrated forecaster then scores ~0.95.
    """
    if not 0.0 < low_pct < high_pct < 1.0:
        raise ValueError("need 0 < low_pct < high_pct < 1")
    e, obs = _as_rows(preds, ys)
    bounds = quantile_matrix(np.sort(e, axis=1), np.array([low_pct, high_pct]))
    inside = (obs >= bounds[:, 0]) & (obs <= bounds[:, 1])
    return float(inside.mean())


def qice(preds, ys, m_bins: int = 10) -> float:
    """Mean absolute deviation of per-bin coverage from 1/M.

    Each observation is assigned to one of M equal-probability quantile
    bins of its own predictive ensemble (boundaries at the j/M quantiles;
    half-open on the right, outermost bins catch everything beyond the
    boundary quantiles).  Returns a fraction in [0, 2(M-1)/M^2].
    """
    if m_bins < 2:
        raise ValueError("m_bins must be >= 2")
    e, obs = _as_rows(preds, ys, min_k=m_bins)
    boundaries = quantile_matrix(
        np.sort(e, axis=1), np.arange(1, m_bins) / m_bins
    )  # (N, M-1)
    bin_idx = (boundaries <= obs[:, None]).sum(axis=1)  # 0..M-1
    counts = np.bincount(bin_idx, minlength=m_bins)
    r = counts / obs.size
    return float(np.mean(np.abs(r - 1.0 / m_bins)))


def point_metrics(preds, ys) -> tuple[float, float]:
    """(MSE, MAE) of the ensemble means against the observations."""
    e, obs = _as_rows(preds, ys, min_k=1)
    err = e.mean(axis=1) - obs
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


def crps_mean(preds, ys) -> float:
    """Mean PWM CRPS over rows (the quantity the training loop minimizes)."""
    e, obs = _as_rows(preds, ys)
    scores, _ = crps_pwm_grad_batch(e, obs)
    return float(scores.mean())


def gaussian_nll(mus, sigmas, ys) -> float:
    """Mean Gaussian negative log-likelihood 0.5 log(2 pi s^2) + (y-m)^2/(2 s^2)."""
    mu = np.atleast_1d(np.asarray(mus, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigmas, dtype=float))
    obs = np.atleast_1d(np.asarray(ys, dtype=float))
    if not mu.shape == sigma.shape == obs.shape:
        raise ValueError("mus, sigmas and ys must have matching lengths")
    if np.any(sigma <= 0.0):
        raise ValueError("sigmas must be > 0")
    nll = 0.5 * np.log(2.0 * np.pi * sigma**2) + (obs - mu) ** 2 / (2.0 * sigma**2)
    return float(nll.mean())


def compute_metrics(
    preds,
    ys,
    m_bins: int = 10,
    low_pct: float = 0.025,
    high_pct: float = 0.975,
    nll: float | None = None,
) -> MetricsReport:
    """All ensemble metrics for one evaluation set."""
    e, obs = _as_rows(preds, ys, min_k=max(2, m_bins))
    mse, mae = point_metrics(e, obs)
    return MetricsReport(
        picp=picp(e, obs, low_pct, high_pct),
        qice=qice(e, obs, m_bins),
        crps_mean=crps_mean(e, obs),
        mse=mse,
        mae=mae,
        n_rows=int(obs.size),
        nll=nll,
    )


def batched_metrics(
    batches,
    m_bins: int = 10,
    low_pct: float = 0.025,
    high_pct: float = 0.975,
) -> MetricsReport:
    """Compute each metric per batch, then average unweighted across batches.

    The unweighted mean matches the long-series evaluation convention even
    when the final batch is short; pad or drop the tail beforehand if a
    row-weighted result is wanted.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("need at least one batch")
    reports = [compute_metrics(p, y, m_bins, low_pct, high_pct) for p, y in batches]
    return MetricsReport(
        picp=float(np.mean([r.picp for r in reports])),
        qice=float(np.mean([r.qice for r in reports])),
        crps_mean=float(np.mean([r.crps_mean for r in reports])),
        mse=float(np.mean([r.mse for r in reports])),
        mae=float(np.mean([r.mae for r in reports])),
        n_rows=int(sum(r.n_rows for r in reports)),
    )
