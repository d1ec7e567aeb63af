"""Acceptance suite: every top-level criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output on failure) and then asserts, so a red run still reports
which criteria held.
"""

import subprocess
import sys
import time

import numpy as np

import distpred as dp
from distpred.data import rng_from_seed


def report(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {status}: {name}{suffix}")
    assert ok, f"{name}{suffix}"


def calibrated_rows(rng, n, k):
    """Rows whose target and ensemble share one conditional Gaussian."""
    mu = rng.uniform(-2.0, 2.0, size=n)
    sigma = rng.uniform(0.5, 2.0, size=n)
    ys = rng.normal(mu, sigma)
    preds = rng.normal(mu[:, None], sigma[:, None], size=(n, k))
    return preds, ys


def train_toy(task, seed, n=5000, k=1000, hidden=(100, 100), dropout=0.0,
              max_epochs=40, patience=5, lr=1e-3):
    ds = dp.generate_toy(task, n, seed=seed)
    plan = dp.make_folds(ds.n_rows, 1, seed=seed)
    train_idx, test_idx = plan.folds[0]
    std = dp.standardize(ds, train_idx)
    model_config = dp.ModelConfig(
        input_dim=ds.n_features, hidden_dims=hidden, k_out=k, dropout_p=dropout, seed=seed
    )
    train_config = dp.TrainConfig(
        lr=lr, batch_size=64, max_epochs=max_epochs, patience=patience, seed=seed
    )
    params, history = dp.train(std.subset(train_idx), model_config, train_config)
    stats = std.standardization
    x_test = (ds.x[test_idx] - stats.x_mean) / stats.x_std
    return params, stats, x_test, ds.y[test_idx], history


# --- 1. estimator equivalence ------------------------------------------------------


def test_estimator_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_eq = 0.0
    worst_rel = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 257))
        s = rng.normal(size=k) * rng.uniform(0.1, 10.0) + rng.normal() * 5.0
        y = float(rng.normal() * 3.0)
        naive = dp.crps_naive(s, y)
        worst_eq = max(worst_eq, abs(naive - dp.crps_sorted(s, y)))
        mean_dev = float(np.mean(np.abs(s - y)))
        relation = mean_dev - k / (k - 1) * (mean_dev - naive)
        worst_rel = max(worst_rel, abs(dp.crps_pwm(s, y) - relation))
    elapsed = time.perf_counter() - start
    report(
        "estimator-equivalence",
        worst_eq <= 1e-10 and worst_rel <= 1e-10 and elapsed < 5.0,
        f"max|naive-sorted|={worst_eq:.2e}, max relation err={worst_rel:.2e}, {elapsed:.1f}s",
    )


# --- 2. gradient correctness --------------------------------------------------------


def loss_gradient_agreement(grad, fd, zero_tol=1e-7):
    diff = np.abs(grad - fd)
    mag = np.maximum(np.abs(grad), np.abs(fd))
    small = mag < zero_tol
    if np.any(diff[small] > zero_tol):
        return np.inf
    live = diff[~small] / mag[~small]
    return float(live.max()) if live.size else 0.0


def test_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    h = 1e-6

    worst_loss = 0.0
    for _ in range(500):
        while True:
            k = int(rng.integers(2, 17))
            s = rng.normal(size=k) * rng.uniform(0.5, 3.0)
            y = float(rng.normal())
            if np.min(np.abs(s - y)) > 1e-4 and np.min(np.diff(np.sort(s))) > 1e-4:
                break
        _, grad = dp.crps_loss_and_grad(s, y)
        fd = np.empty(k)
        for i in range(k):
            up, dn = s.copy(), s.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (dp.crps_pwm(up, y) - dp.crps_pwm(dn, y)) / (2.0 * h)
        worst_loss = max(worst_loss, loss_gradient_agreement(grad, fd))

    # Full backprop against finite differences on 20 random parameters.
    config = dp.ModelConfig(3, (8, 5), 6, activation="tanh", seed=2)
    params = dp.init(config)
    x = rng.normal(size=(4, 3))
    ys = rng.normal(size=4)

    def loss_of_params():
        out, _ = dp.forward(params, x)
        scores, _ = dp.crps_pwm_grad_batch(out, ys)
        return float(scores.mean())

    out, trace = dp.forward(params, x)
    _, row_grads = dp.crps_pwm_grad_batch(out, ys)
    grads = dp.backward(params, trace, row_grads / ys.size)
    flat = list(zip(params.weights + params.biases, grads.weights + grads.biases))
    worst_bp = 0.0
    for _ in range(20):
        arr, g = flat[int(rng.integers(len(flat)))]
        idx = tuple(int(rng.integers(d)) for d in arr.shape)
        keep = arr[idx]
        arr[idx] = keep + h
        up = loss_of_params()
        arr[idx] = keep - h
        dn = loss_of_params()
        arr[idx] = keep
        fd = (up - dn) / (2.0 * h)
        denom = max(abs(fd), abs(g[idx]), 1e-8)
        worst_bp = max(worst_bp, abs(fd - g[idx]) / denom)

    elapsed = time.perf_counter() - start
    report(
        "gradient-correctness",
        worst_loss <= 1e-4 and worst_bp <= 1e-4 and elapsed < 30.0,
        f"loss grad rel err={worst_loss:.2e}, backprop rel err={worst_bp:.2e}, {elapsed:.1f}s",
    )


# --- 3. Monte-Carlo CRPS consistency --------------------------------------------------


def test_monte_carlo_crps_consistency():
    start = time.perf_counter()
    target = dp.crps_gaussian_closed(0.0, 1.0, 0.0)
    errors = []
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        errors.append(abs(dp.crps_pwm(rng.normal(size=10000), 0.0) - target))
    median = float(np.median(errors))
    elapsed = time.perf_counter() - start
    report(
        "monte-carlo-crps-consistency",
        median <= 0.01 and elapsed < 10.0,
        f"median |err|={median:.4f} vs closed form {target:.5f}, {elapsed:.1f}s",
    )


# --- 4. calibration oracle --------------------------------------------------------------


def test_calibration_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    preds, ys = calibrated_rows(rng, 2000, 1000)
    picp_value = dp.picp(preds, ys)
    qice_value = dp.qice(preds, ys)
    elapsed = time.perf_counter() - start
    report(
        "calibration-oracle",
        abs(picp_value - 0.95) <= 0.02 and qice_value <= 0.02 and elapsed < 120.0,
        f"PICP={picp_value:.4f}, QICE={qice_value * 100:.3f}%, {elapsed:.1f}s",
    )


# --- 5. toy-task end-to-end ---------------------------------------------------------------


def test_toy_task_end_to_end():
    start = time.perf_counter()
    results = {}
    for task, seed in (("linear", 11), ("sinusoidal", 11)):
        params, stats, x_test, y_test, _ = train_toy(task, seed)
        ensembles = dp.predict(params, x_test) * stats.y_std + stats.y_mean
        results[task] = (dp.qice(ensembles, y_test), dp.picp(ensembles, y_test))
    elapsed = time.perf_counter() - start
    ok = all(q <= 0.05 and 0.90 <= p <= 0.99 for q, p in results.values())
    detail = ", ".join(
        f"{task}: QICE={q * 100:.2f}% PICP={p:.3f}" for task, (q, p) in results.items()
    )
    report("toy-task-end-to-end", ok and elapsed < 300.0, f"{detail}, {elapsed:.0f}s")


# --- 6. ablation trends ----------------------------------------------------------------------


def test_ablation_trends():
    # Sample-count trend on the calibrated synthetic task.
    medians = []
    for k in (10, 100, 1000):
        qs = []
        for seed in range(5):
            rng = np.random.default_rng(600 + seed)
            preds, ys = calibrated_rows(rng, 2000, k)
            qs.append(dp.qice(preds, ys))
        medians.append(float(np.median(qs)))
    k_trend_ok = all(b <= a + 0.005 for a, b in zip(medians, medians[1:]))

    # MC-dropout pooling must not hurt calibration (trained dropout models).
    q1, q100 = [], []
    for seed in range(5):
        params, stats, x_test, y_test, _ = train_toy(
            "linear", 700 + seed, n=1500, k=100, hidden=(64,), dropout=0.1,
            max_epochs=20, patience=4, lr=2e-3,
        )
        e1 = dp.predict(params, x_test) * stats.y_std + stats.y_mean
        e100 = dp.predict_mcd(params, x_test, 100, seed=seed) * stats.y_std + stats.y_mean
        q1.append(dp.qice(e1, y_test))
        q100.append(dp.qice(e100, y_test))
    mcd_ok = float(np.median(q100)) <= float(np.median(q1)) + 0.005

    report(
        "ablation-trends",
        k_trend_ok and mcd_ok,
        f"QICE medians over K: {[f'{m * 100:.2f}%' for m in medians]}, "
        f"MCD T=1 {np.median(q1) * 100:.2f}% vs T=100 {np.median(q100) * 100:.2f}%",
    )


# --- 7. single-pass inference -------------------------------------------------------------------


def test_single_pass_inference(tmp_path):
    params = dp.init(dp.ModelConfig(2, (16,), 64, seed=7))
    dp.reset_forward_row_count()
    rng = rng_from_seed(7, 1)
    dp.predict(params, rng.normal(size=(333, 2)))
    counter_ok = dp.forward_row_count() == 333

    ckpt = tmp_path / "bench.dprd"
    dp.save_checkpoint(ckpt, params)
    proc = subprocess.run(
        [sys.executable, "-m", "distpred.cli", "bench", str(ckpt), "--rows", "128", "--seed", "1"],
        capture_output=True,
        text=True,
    )
    bench_ok = (
        proc.returncode == 0
        and "rows=128 forward_rows=128" in proc.stdout
        and "match=true" in proc.stdout
    )
    report(
        "single-pass-inference",
        counter_ok and bench_ok,
        f"counter 333/333={counter_ok}, bench stdout={proc.stdout.strip()!r}",
    )


# --- 8. gaussian baseline ---------------------------------------------------------------------


def test_gaussian_baseline_recovery_and_gap():
    rng = rng_from_seed(8, 1)
    n = 2000
    x = rng.normal(size=(n, 1))
    y = 3.0 + 2.0 * rng.normal(size=n)
    ds = dp.standardize(dp.Dataset(x, y, ["x"]), np.arange(n))
    params, _ = dp.train_gaussian_baseline(
        ds,
        dp.ModelConfig(1, (32,), 2, seed=8),
        dp.TrainConfig(lr=1e-2, batch_size=64, max_epochs=30, patience=5, seed=8),
    )
    mu, sigma = dp.predict_gaussian(params, ds.x)
    stats = ds.standardization
    mu_hat = float(np.mean(mu * stats.y_std + stats.y_mean))
    sigma_hat = float(np.mean(sigma * stats.y_std))
    recovery_ok = abs(mu_hat - 3.0) <= 0.2 and abs(sigma_hat - 2.0) <= 0.3

    # Skewed conditional noise: the Gaussian head cannot calibrate, the
    # ensemble head can.
    rng2 = rng_from_seed(8, 2)
    m = 3000
    xs = rng2.uniform(-2.0, 2.0, size=(m, 1))
    ys = xs[:, 0] + np.exp(0.8 * rng2.normal(size=m))
    skew_ds = dp.Dataset(xs, ys, ["x"])
    plan = dp.make_folds(m, 1, seed=8)
    tr, te = plan.folds[0]
    std = dp.standardize(skew_ds, tr)
    tcfg = dp.TrainConfig(lr=2e-3, batch_size=64, max_epochs=40, patience=6, seed=8)
    pe, _ = dp.train(std.subset(tr), dp.ModelConfig(1, (64,), 500, seed=8), tcfg)
    pg, _ = dp.train_gaussian_baseline(std.subset(tr), dp.ModelConfig(1, (64,), 2, seed=8), tcfg)
    st = std.standardization
    x_te = (skew_ds.x[te] - st.x_mean) / st.x_std
    y_te = skew_ds.y[te]
    ens = dp.predict(pe, x_te) * st.y_std + st.y_mean
    mu_te, sigma_te = dp.predict_gaussian(pg, x_te)
    ens_g = dp.gaussian_pseudo_ensemble(mu_te * st.y_std + st.y_mean, sigma_te * st.y_std, 500)
    qice_ens = dp.qice(ens, y_te)
    qice_gauss = dp.qice(ens_g, y_te)
    gap_ok = qice_gauss > qice_ens

    report(
        "gaussian-baseline",
        recovery_ok and gap_ok,
        f"mu={mu_hat:.3f}, sigma={sigma_hat:.3f}; skewed QICE ensemble "
        f"{qice_ens * 100:.2f}% vs gaussian {qice_gauss * 100:.2f}%",
    )


# --- 9. CLI determinism ------------------------------------------------------------------------


def run_cli_subprocess(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "distpred.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def test_cli_determinism(tmp_path):
    """Every command, run twice with identical flags: byte-identical stdout
    and output files."""
    checks = {}

    def twice(name, args, outputs=()):
        run_a = run_cli_subprocess(args, tmp_path)
        blobs_a = [(tmp_path / rel).read_bytes() for rel in outputs]
        for rel in outputs:
            (tmp_path / rel).unlink()
        run_b = run_cli_subprocess(args, tmp_path)
        blobs_b = [(tmp_path / rel).read_bytes() for rel in outputs]
        checks[name] = (
            run_a.returncode == 0
            and run_b.returncode == 0
            and run_a.stdout == run_b.stdout
            and blobs_a == blobs_b
        )

    twice(
        "gen-toy",
        ["gen-toy", "linear", "--n", "300", "--seed", "13", "--out", "toy.csv"],
        outputs=["toy.csv"],
    )
    train_args = [
        "train", "toy.csv", "--out", "model.dprd", "--history", "hist.csv",
        "--k", "40", "--hidden", "16", "--epochs", "3", "--patience", "0",
        "--batch-size", "64", "--seed", "13",
    ]
    twice("train", train_args, outputs=["model.dprd", "hist.csv"])
    # Recreate the checkpoint consumed by the eval/predict/bench runs.
    run_cli_subprocess(train_args, tmp_path)
    twice("eval", ["eval", "model.dprd", "toy.csv", "--seed", "13"])
    twice(
        "predict-dist",
        ["predict-dist", "model.dprd", "--x", "0.75", "--out", "dist.txt"],
        outputs=["dist.txt"],
    )
    twice("bench", ["bench", "model.dprd", "--rows", "64", "--seed", "13"])

    report(
        "cli-determinism",
        all(checks.values()),
        ", ".join(f"{k}={'ok' if v else 'DIFF'}" for k, v in checks.items()),
    )
