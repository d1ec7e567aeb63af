"""CRPS estimators for discrete ensembles, with analytic training gradients.

The continuous ranked probability score of an ensemble {s_1..s_K} against a
scalar observation y is computed in three algebraically related forms:

* ``crps_naive``  -- double-sum form,
  ``mean|s - y| - (1/(2 K^2)) sum_ij |s_i - s_j|``; O(K^2) time.
* ``crps_sorted`` -- rearrangement over ascending order statistics,
  ``(2/K^2) sum_k (s_(k) - y) (K 1{y < s_(k)} - k + 1/2)``; equal to the
  naive form to machine precision but O(K log K).
* ``crps_pwm``    -- probability-weighted-moment form,
  ``mean|s - y| + mean(s) - (2/(K(K-1))) sum_k s_(k) (k - 1)``; identical to
  the unbiased-spread estimator
  ``mean|s - y| - (1/(2 K (K-1))) sum_{i != j} |s_i - s_j|`` and used as the
  training loss (gradient in ``crps_loss_and_grad``).

The pinball-type quantile score and the closed-form CRPS of a Gaussian are
included as independent references for validating the ensemble estimators.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm


def _as_ensemble(samples, min_k: int = 1) -> np.ndarray:
    s = np.asarray(samples, dtype=float)
    if s.ndim != 1:
        raise ValueError("ensemble must be a 1-D array of samples")
    if s.size < min_k:
        raise ValueError(f"ensemble needs at least {min_k} sample(s), got {s.size}")
    if not np.all(np.isfinite(s)):
        raise ValueError("ensemble samples must be finite")
    return s


def _check_observation(y) -> float:
    y = float(y)
    if not np.isfinite(y):
        raise ValueError("observation must be finite")
    return y


def crps_naive(samples, y) -> float:
    """Double-sum ensemble CRPS; O(K^2) time, always >= 0."""
    # Summing over the ascending arrangement makes every permutation of the
    # input run the exact same float operations (bit-stable invariance).
    s = np.sort(_as_ensemble(samples), kind="stable")
    y = _check_observation(y)
    k = s.size
    spread = np.abs(s[:, None] - s[None, :]).sum()
    return float(np.mean(np.abs(s - y)) - spread / (2.0 * k * k))


def crps_sorted(samples, y) -> float:
    """Order-statistic form of the ensemble CRPS; equals :func:`crps_naive`.

    O(K log K) time and O(K) extra space.  The strictness of the indicator
    does not matter: at a tie the (s_(k) - y) factor vanishes.
    """
    s = np.sort(_as_ensemble(samples), kind="stable")
    y = _check_observation(y)
    k = s.size
    ranks = np.arange(1, k + 1)
    terms = (s - y) * (k * (y < s) - ranks + 0.5)
    return float(2.0 / (k * k) * terms.sum())


def crps_pwm(samples, y) -> float:
    """Probability-weighted-moment ensemble CRPS (unbiased spread term).

    Needs K >= 2; may be slightly negative for very small ensembles.
    """
    score, _ = _pwm_score_and_grad(_as_ensemble(samples, min_k=2), _check_observation(y))
    return score


def crps_loss_and_grad(samples, y) -> tuple[float, np.ndarray]:
    """PWM CRPS plus its gradient with respect to every ensemble member.

    ``grad[k] = sign(s_k - y)/K + 1/K - (2/(K(K-1))) (rank_k - 1)`` where
    rank is 1-based in the ascending sort, sign(0) = 0, and rank ties are
    broken by original index order (stable sort).
    """
    s = _as_ensemble(samples, min_k=2)
    y = _check_observation(y)
    return _pwm_score_and_grad(s, y)


def _pwm_score_and_grad(s: np.ndarray, y: float) -> tuple[float, np.ndarray]:
    k = s.size
    order = np.argsort(s, kind="stable")
    ranks = np.empty(k, dtype=float)
    ranks[order] = np.arange(1, k + 1)
    sorted_s = s[order]
    weight = 2.0 / (k * (k - 1))
    # The location terms mean(s) - weight * sum(s_(k) (k-1)) are folded into
    # zero-sum integer coefficients (2k - K - 1): same quantity, but immune
    # to the large-offset cancellation of the three-term expression.  Running
    # over the sorted arrangement keeps the value bit-stable under input
    # permutations; the gradient stays aligned with the input order.
    coef = 2.0 * np.arange(1, k + 1) - k - 1.0
    score = np.mean(np.abs(sorted_s - y)) - np.sum(coef * sorted_s) / (k * (k - 1))
    grad = np.sign(s - y) / k + 1.0 / k - weight * (ranks - 1.0)
    return float(score), grad


def crps_pwm_grad_batch(ensembles, ys) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized PWM CRPS scores and gradients for a minibatch.

    Args:
        ensembles: (n, K) array, one ensemble per row, K >= 2.
        ys: (n,) observations.

    Returns:
        scores (n,) and grads (n, K) with grads[i, j] = d score_i / d ensembles[i, j].
    """
    e = np.asarray(ensembles, dtype=float)
    obs = np.asarray(ys, dtype=float)
    if e.ndim != 2 or obs.ndim != 1 or e.shape[0] != obs.shape[0]:
        raise ValueError("ensembles must be (n, K) with one observation per row")
    n, k = e.shape
    if k < 2:
        raise ValueError("PWM form needs K >= 2 samples per row")
    order = np.argsort(e, axis=1, kind="stable")
    ranks = np.empty_like(e)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(1.0, k + 1), (n, k)), axis=1)
    sorted_e = np.take_along_axis(e, order, axis=1)
    weight = 2.0 / (k * (k - 1))
    coef = 2.0 * np.arange(1, k + 1) - k - 1.0  # zero-sum, offset-stable
    scores = (
        np.mean(np.abs(sorted_e - obs[:, None]), axis=1)
        - (sorted_e * coef).sum(axis=1) / (k * (k - 1))
    )
    grads = np.sign(e - obs[:, None]) / k + 1.0 / k - weight * (ranks - 1.0)
    return scores, grads


def quantile_score(q_hat, alpha, y) -> float:
    """Quantile scoring rule ``alpha * q_hat + (y - q_hat) 1{y <= q_hat}``.

    Positively oriented for the quantile: its expectation over y is largest
    when q_hat is the true alpha-quantile of the distribution of y.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    q_hat = float(q_hat)
    y = _check_observation(y)
    return float(alpha * q_hat + (y - q_hat) * (y <= q_hat))


def crps_gaussian_closed(mu, sigma, y) -> float:
    """Closed-form CRPS of N(mu, sigma^2) against y.

    ``sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi))`` with
    ``z = (y - mu)/sigma``.
    """
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    z = (_check_observation(y) - float(mu)) / sigma
    return float(sigma * (z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z) - 1.0 / np.sqrt(np.pi)))
