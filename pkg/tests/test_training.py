"""Tests for Adam, the training loop, early stopping and inference helpers."""

import numpy as np
import pytest

from distpred.data import Dataset, rng_from_seed, standardize
from distpred.metrics import gaussian_nll, qice
from distpred.model import (
    ModelConfig,
    ParamGradients,
    forward_row_count,
    init,
    reset_forward_row_count,
)
from distpred.training import (
    AdamState,
    DivergenceError,
    TrainConfig,
    adam_step,
    gaussian_pseudo_ensemble,
    load_checkpoint,
    predict,
    predict_gaussian,
    predict_mcd,
    save_checkpoint,
    train,
    train_gaussian_baseline,
    train_with_state,
)


def linear_dataset(n=600, seed=0, noise=1.0):
    rng = rng_from_seed(seed, 77)
    x = rng.uniform(-2.0, 2.0, size=(n, 1))
    y = 1.5 * x[:, 0] - 0.5 + noise * rng.normal(size=n)
    ds = Dataset(x, y, ["x"])
    return standardize(ds, np.arange(n))


def small_model(seed=0, **overrides):
    cfg = dict(input_dim=1, hidden_dims=(32,), k_out=64, activation="relu", seed=seed)
    cfg.update(overrides)
    return ModelConfig(**cfg)


def quick_train_config(seed=0, **overrides):
    cfg = dict(lr=2e-3, batch_size=64, max_epochs=15, patience=4, seed=seed)
    cfg.update(overrides)
    return TrainConfig(**cfg)


# --- adam ----------------------------------------------------------------------


def test_adam_zero_grads_leave_params_unchanged():
    params = init(small_model())
    before = [w.copy() for w in params.weights] + [b.copy() for b in params.biases]
    state = AdamState.zeros_like(params)
    grads = ParamGradients(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    adam_step(params, grads, state, TrainConfig())
    assert state.step == 1
    for a, b in zip(before, params.weights + params.biases):
        np.testing.assert_array_equal(a, b)


def test_adam_first_step_magnitude_close_to_lr():
    params = init(ModelConfig(2, (), 2, seed=0))
    state = AdamState.zeros_like(params)
    g = np.full_like(params.weights[0], 0.37)
    grads = ParamGradients([g], [np.zeros_like(params.biases[0])])
    before = params.weights[0].copy()
    config = TrainConfig(lr=1e-3)
    adam_step(params, grads, state, config)
    delta = params.weights[0] - before
    # First bias-corrected step is -lr * g / (|g| + eps') with eps' tiny.
    np.testing.assert_allclose(np.abs(delta), config.lr, rtol=1e-4)
    assert np.all(np.sign(delta) == -np.sign(g))


def test_adam_tensors_update_independently():
    params = init(ModelConfig(2, (3,), 2, seed=1))
    state = AdamState.zeros_like(params)
    grads = ParamGradients(
        [np.ones_like(params.weights[0]), np.zeros_like(params.weights[1])],
        [np.zeros_like(b) for b in params.biases],
    )
    w1_before = params.weights[1].copy()
    adam_step(params, grads, state, TrainConfig())
    np.testing.assert_array_equal(params.weights[1], w1_before)


def test_adam_rejects_mismatched_shapes():
    params = init(ModelConfig(2, (), 2, seed=0))
    state = AdamState.zeros_like(params)
    grads = ParamGradients([np.zeros((5, 5))], [np.zeros(2)])
    with pytest.raises(ValueError):
        adam_step(params, grads, state, TrainConfig())


# --- train ---------------------------------------------------------------------


def test_train_constant_target_collapses_ensemble():
    n = 400
    rng = rng_from_seed(1, 78)
    ds = Dataset(rng.normal(size=(n, 1)), np.full(n, 3.0), ["x"])
    std = standardize(ds, np.arange(n))  # constant y -> zeros via std sentinel
    config = small_model(seed=1)
    initial_spread = float(np.std(predict(init(config), std.x[:50])))
    params, history = train(std, config, quick_train_config(seed=1, max_epochs=25))
    final_loss = history.train_loss[-1]
    assert final_loss <= 0.05 * initial_spread


def test_train_improves_validation_loss():
    ds = linear_dataset(seed=2)
    params, history = train(ds, small_model(seed=2), quick_train_config(seed=2))
    best = history.valid_loss[history.best_epoch]
    assert best <= 0.7 * history.valid_loss[0]


def test_train_patience_zero_runs_all_epochs():
    ds = linear_dataset(n=200, seed=3)
    config = quick_train_config(seed=3, max_epochs=6, patience=0)
    _, history = train(ds, small_model(seed=3), config)
    assert len(history.train_loss) == 6


def test_train_returns_best_validation_params():
    ds = linear_dataset(n=300, seed=4)
    params, history = train(ds, small_model(seed=4), quick_train_config(seed=4))
    assert history.valid_loss[history.best_epoch] == min(history.valid_loss)


def test_train_deterministic_history():
    ds = linear_dataset(n=250, seed=5)
    _, h1 = train(ds, small_model(seed=5), quick_train_config(seed=5, max_epochs=5))
    _, h2 = train(ds, small_model(seed=5), quick_train_config(seed=5, max_epochs=5))
    assert h1.train_loss == h2.train_loss
    assert h1.valid_loss == h2.valid_loss
    assert h1.best_epoch == h2.best_epoch


def test_train_seed_stability_across_runs():
    finals = []
    for seed in range(5):
        ds = linear_dataset(n=400, seed=100 + seed)
        _, history = train(ds, small_model(seed=seed), quick_train_config(seed=seed))
        finals.append(history.valid_loss[history.best_epoch])
    assert np.std(finals) <= 0.25 * np.mean(finals)


def test_train_divergence_raises_with_epoch():
    # The gaussian head diverges under an absurd learning rate: log sigma
    # shoots off, sigma^2 underflows and the NLL turns infinite.  (The CRPS
    # loss itself has bounded gradients and survives the same abuse.)
    ds = linear_dataset(n=120, seed=6)
    config = quick_train_config(seed=6, lr=1e6, max_epochs=4, patience=0, clip_norm=0.0)
    with pytest.raises(DivergenceError) as err:
        with np.errstate(all="ignore"):
            train_gaussian_baseline(ds, small_model(seed=6, k_out=2), config)
    assert err.value.epoch >= 0


def test_train_rejects_empty_or_mismatched_data():
    ds = linear_dataset(n=50, seed=7)
    with pytest.raises(ValueError):
        train(ds, small_model(input_dim=3), quick_train_config())


def test_history_csv_round_trip():
    ds = linear_dataset(n=150, seed=8)
    _, history = train(ds, small_model(seed=8), quick_train_config(seed=8, max_epochs=3, patience=0))
    text = history.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "epoch,train_loss,valid_loss"
    assert len(lines) == 4
    epoch0 = lines[1].split(",")
    assert float(epoch0[1]) == history.train_loss[0]


# --- predict -------------------------------------------------------------------


def test_predict_deterministic_and_order_preserving():
    ds = linear_dataset(n=200, seed=9)
    params, _ = train(ds, small_model(seed=9), quick_train_config(seed=9, max_epochs=3, patience=0))
    x = ds.x[:10]
    a = predict(params, x)
    b = predict(params, x)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (10, 64)
    # Row order is preserved: permuting the inputs permutes the ensembles.
    perm = np.array([4, 0, 9, 2, 7, 1, 3, 8, 6, 5])
    np.testing.assert_array_equal(predict(params, x[perm]), a[perm])
    # The single-row path computes the same map (up to BLAS batching noise).
    np.testing.assert_allclose(predict(params, x[3]), a[3], rtol=1e-10, atol=1e-12)


def test_predict_single_forward_per_row():
    params = init(small_model(seed=10))
    reset_forward_row_count()
    predict(params, np.zeros((23, 1)))
    assert forward_row_count() == 23
    reset_forward_row_count()
    for i in range(5):
        predict(params, np.zeros(1))
    assert forward_row_count() == 5


# --- predict_mcd ------------------------------------------------------------------


def test_predict_mcd_t1_equals_predict():
    params = init(small_model(seed=11, dropout_p=0.2))
    x = np.array([[0.5]])
    np.testing.assert_array_equal(predict_mcd(params, x, 1, seed=3), predict(params, x))


def test_predict_mcd_pools_samples():
    params = init(small_model(seed=12, dropout_p=0.2))
    x = np.array([[0.5], [1.0]])
    pooled = predict_mcd(params, x, 3, seed=5)
    assert pooled.shape == (2, 3 * 64)
    again = predict_mcd(params, x, 3, seed=5)
    np.testing.assert_array_equal(pooled, again)
    other = predict_mcd(params, x, 3, seed=6)
    assert not np.array_equal(pooled, other)


def test_predict_mcd_requires_dropout_for_t_gt_1():
    params = init(small_model(seed=13, dropout_p=0.0))
    with pytest.raises(ValueError):
        predict_mcd(params, np.array([[0.5]]), 2, seed=0)
    with pytest.raises(ValueError):
        predict_mcd(params, np.array([[0.5]]), 0, seed=0)


def test_predict_mcd_does_not_hurt_calibration():
    ds_raw = rng_from_seed(14, 79)
    n = 800
    x = ds_raw.uniform(-2, 2, size=(n, 1))
    y = 2.0 * x[:, 0] + 1.0 + ds_raw.normal(size=n)
    ds = standardize(Dataset(x, y, ["x"]), np.arange(n))
    params, _ = train(
        ds, small_model(seed=14, dropout_p=0.1), quick_train_config(seed=14, max_epochs=12)
    )
    test_rng = rng_from_seed(15, 80)
    x_test = test_rng.uniform(-2, 2, size=(400, 1))
    y_test = 2.0 * x_test[:, 0] + 1.0 + test_rng.normal(size=400)
    st = ds.standardization
    x_std = (x_test - st.x_mean) / st.x_std
    e1 = predict(params, x_std) * st.y_std + st.y_mean
    e64 = predict_mcd(params, x_std, 64, seed=14) * st.y_std + st.y_mean
    assert qice(e64, y_test) <= qice(e1, y_test) + 0.01


# --- gaussian baseline ---------------------------------------------------------------


def test_gaussian_baseline_recovers_moments():
    rng = rng_from_seed(16, 81)
    n = 2000
    x = rng.normal(size=(n, 1))  # uninformative
    y = 3.0 + 2.0 * rng.normal(size=n)
    ds = standardize(Dataset(x, y, ["x"]), np.arange(n))
    params, _ = train_gaussian_baseline(
        ds, small_model(seed=16, hidden_dims=(32,), k_out=2), quick_train_config(seed=16, lr=1e-2, max_epochs=30)
    )
    mu, sigma = predict_gaussian(params, ds.x)
    st = ds.standardization
    mu_orig = float(np.mean(mu * st.y_std + st.y_mean))
    sigma_orig = float(np.mean(sigma * st.y_std))
    assert mu_orig == pytest.approx(3.0, abs=0.2)
    assert sigma_orig == pytest.approx(2.0, abs=0.3)
    nll = gaussian_nll(mu, sigma, ds.y)
    sigma_hat = float(np.mean(sigma))
    assert nll == pytest.approx(0.5 * np.log(2.0 * np.pi * sigma_hat**2) + 0.5, abs=0.1)


def test_gaussian_baseline_sigma_shrinks_on_deterministic_target():
    rng = rng_from_seed(17, 82)
    n = 400
    x = rng.uniform(-1, 1, size=(n, 1))
    y = 2.0 * x[:, 0]  # no noise
    ds = standardize(Dataset(x, y, ["x"]), np.arange(n))
    sigmas = []
    for epochs in (1, 3, 9):
        params, _ = train_gaussian_baseline(
            ds,
            small_model(seed=17, hidden_dims=(16,), k_out=2),
            quick_train_config(seed=17, lr=5e-3, max_epochs=epochs, patience=0),
        )
        _, sigma = predict_gaussian(params, ds.x)
        sigmas.append(float(np.mean(sigma)))
    assert sigmas[0] > sigmas[1] > sigmas[2]


def test_gaussian_pseudo_ensemble_quantiles():
    ens = gaussian_pseudo_ensemble(0.0, 1.0, 1000)
    assert ens.shape == (1000,)
    assert abs(float(np.mean(ens))) <= 1e-12
    assert float(np.std(ens)) == pytest.approx(1.0, abs=0.01)
    rows = gaussian_pseudo_ensemble(np.array([0.0, 5.0]), np.array([1.0, 2.0]), 100)
    assert rows.shape == (2, 100)
    assert np.mean(rows[1]) == pytest.approx(5.0, abs=1e-9)
    with pytest.raises(ValueError):
        gaussian_pseudo_ensemble(0.0, 0.0, 100)


# --- checkpoints ------------------------------------------------------------------------


def test_checkpoint_round_trip_with_state(tmp_path):
    ds = linear_dataset(n=200, seed=18)
    params, history, state = train_with_state(
        ds, small_model(seed=18), quick_train_config(seed=18, max_epochs=3, patience=0)
    )
    path = tmp_path / "ckpt.dprd"
    save_checkpoint(path, params, adam_state=state, standardization=ds.standardization)
    loaded_params, loaded_state, loaded_stats = load_checkpoint(path)
    np.testing.assert_array_equal(loaded_params.weights[0], params.weights[0])
    assert loaded_state.step == state.step
    np.testing.assert_array_equal(loaded_state.m_weights[0], state.m_weights[0])
    np.testing.assert_array_equal(loaded_state.v_biases[-1], state.v_biases[-1])
    assert loaded_stats.y_std == ds.standardization.y_std
    preds_a = predict(params, ds.x[:5])
    preds_b = predict(loaded_params, ds.x[:5])
    np.testing.assert_array_equal(preds_a, preds_b)
