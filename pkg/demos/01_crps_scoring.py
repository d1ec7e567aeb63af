"""Scoring ensembles with the CRPS: the three estimator forms side by side.

Walks through scoring a small predictive ensemble against an observation,
shows that the double-sum and sorted forms agree to machine precision, how
the unbiased PWM form differs at small K, and how the ensemble estimate
converges to the closed-form Gaussian CRPS as K grows.

Run:  python demos/01_crps_scoring.py
"""

import numpy as np

from distpred import (
    crps_gaussian_closed,
    crps_loss_and_grad,
    crps_naive,
    crps_pwm,
    crps_sorted,
    quantile_score,
)

rng = np.random.default_rng(7)

print("== A five-member ensemble against y = 1.3 ==")
ensemble = np.array([0.4, 2.1, 1.0, 1.7, 0.9])
y = 1.3
print(f"ensemble: {ensemble}")
print(f"crps_naive : {crps_naive(ensemble, y):.6f}   (O(K^2) double sum)")
print(f"crps_sorted: {crps_sorted(ensemble, y):.6f}   (O(K log K), same value)")
print(f"crps_pwm   : {crps_pwm(ensemble, y):.6f}   (unbiased spread term)")

print()
print("== The PWM form is the training loss; its gradient is analytic ==")
score, grad = crps_loss_and_grad(ensemble, y)
print(f"loss = {score:.6f}")
print(f"grad = {np.round(grad, 4)}")
print(f"sum of gradient entries: {grad.sum():+.4f} (always in [-1, 1])")

print()
print("== Convergence to the closed-form Gaussian CRPS ==")
target = crps_gaussian_closed(0.0, 1.0, 0.5)
print(f"closed form, N(0,1) vs y=0.5: {target:.6f}")
for k in (10, 100, 1000, 10000, 100000):
    estimate = crps_pwm(rng.normal(size=k), 0.5)
    print(f"  K={k:>6}: ensemble estimate {estimate:.6f}  (abs err {abs(estimate - target):.2e})")

print()
print("== Quantile (pinball-type) score: expectation peaks at the true quantile ==")
alpha = 0.8
draws = rng.normal(size=100000)
true_q = float(np.quantile(draws, alpha))
for q_hat in (true_q - 1.0, true_q - 0.3, true_q, true_q + 0.3, true_q + 1.0):
    expected = np.mean([quantile_score(q_hat, alpha, yy) for yy in draws[:20000]])
    marker = "  <- true quantile" if q_hat == true_q else ""
    print(f"  q_hat={q_hat:+.3f}: E[score] = {expected:.4f}{marker}")
