"""Probabilistic forecasting with sliding windows over a synthetic series.

Builds stride-1 windows (input length 24, horizon 4) over a noisy seasonal
series, trains one ensemble head per horizon step, and evaluates each step's
distributional forecast, including the per-batch metric averaging used for
long evaluation sets.

Run:  python demos/05_sliding_window_forecasting.py   (~30 s)
"""

import numpy as np

import distpred as dp

SEED = 3
rng = dp.rng_from_seed(SEED, 901)

print("== Series: daily-ish seasonality + trend + noise, length 1200 ==")
t = np.arange(1200)
series = (
    2.0 * np.sin(2.0 * np.pi * t / 24.0)
    + 0.5 * np.sin(2.0 * np.pi * t / 168.0)
    + 0.001 * t
    + 0.3 * rng.normal(size=t.size)
)

INPUT_LEN, HORIZON = 24, 4
step_datasets = dp.make_windows(series, input_len=INPUT_LEN, horizon=HORIZON)
n_windows = step_datasets[0].n_rows
print(f"windows: {n_windows} (input {INPUT_LEN} -> horizon {HORIZON})")

# Chronological split: train on the first 80% of windows, test on the rest.
split = int(0.8 * n_windows)
train_idx = np.arange(split)
test_idx = np.arange(split, n_windows)

train_config = dp.TrainConfig(lr=1e-3, batch_size=64, max_epochs=25, patience=4, seed=SEED)

print()
print("== One ensemble head per horizon step (K = 200) ==")
for h, ds in enumerate(step_datasets, start=1):
    std = dp.standardize(ds, train_idx)
    stats = std.standardization
    model_config = dp.ModelConfig(
        input_dim=ds.n_features, hidden_dims=(64,), k_out=200, seed=SEED + h
    )
    params, history = dp.train(std.subset(train_idx), model_config, train_config)
    x_test = (ds.x[test_idx] - stats.x_mean) / stats.x_std
    ensembles = dp.predict(params, x_test) * stats.y_std + stats.y_mean
    report = dp.compute_metrics(ensembles, ds.y[test_idx])
    print(
        f"  t+{h}: CRPS {report.crps_mean:.3f}  QICE {report.qice * 100:5.2f}%  "
        f"PICP {report.picp:.3f}  MSE {report.mse:.3f}  "
        f"({len(history.train_loss)} epochs)"
    )
    if h == 1:
        first_step = (ensembles, ds.y[test_idx])

print()
print("== Per-batch metric averaging (long-series evaluation convention) ==")
ensembles, y_test = first_step
batch = 64
batches = [
    (ensembles[i : i + batch], y_test[i : i + batch])
    for i in range(0, y_test.size, batch)
]
batched = dp.batched_metrics(batches)
direct = dp.compute_metrics(ensembles, y_test)
print(f"direct  t+1 metrics: {direct.to_line()}")
print(f"batched t+1 metrics: {batched.to_line()}")
print("(unweighted mean across batches; short final batch counts once)")
