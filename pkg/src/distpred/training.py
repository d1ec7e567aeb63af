"""Minibatch Adam training on the ensemble CRPS loss, plus inference helpers.

The trainer minimizes the mean PWM CRPS between each row's K-sample
ensemble and its target, carving a seeded validation split out of the
given (already standardized) training data and early-stopping on the
validation loss.  A Gaussian-likelihood variant trains a two-output
(mu, log sigma) head against the mean negative log-likelihood instead,
for comparison against the distribution-free ensemble head.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from . import model as model_mod
from .data import Dataset, Standardization, rng_from_seed
from .model import ModelConfig, ModelParams, ParamGradients, backward, forward
from .scoring import crps_pwm_grad_batch

STREAM_SHUFFLE = 3000
STREAM_DROPOUT = 3001
STREAM_VALID_SPLIT = 3002
STREAM_MCD = 4000


class DivergenceError(RuntimeError):
    """Training loss became non-finite; carries the offending epoch index."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10  # 0 disables early stopping
    seed: int = 0
    valid_fraction: float = 0.1
    clip_norm: float = 10.0  # global-norm clip; tames the L1 loss terms early on

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float]
    valid_loss: list[float]
    best_epoch: int

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,valid_loss"]
        for i, (t, v) in enumerate(zip(self.train_loss, self.valid_loss)):
            lines.append(f"{i},{float(t)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.m_weights],
            [m.copy() for m in self.m_biases],
            [v.copy() for v in self.v_weights],
            [v.copy() for v in self.v_biases],
            self.step,
        )

    def moments(self) -> list[tuple[np.ndarray, ...]]:
        return list(zip(self.m_weights, self.m_biases, self.v_weights, self.v_biases))


def adam_step(
    params: ModelParams, grads: ParamGradients, state: AdamState, config: TrainConfig
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, in place; each tensor updates independently."""
    if len(grads.weights) != len(params.weights):
        raise ValueError("gradient structure does not match the parameters")
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for p, g, m, v in zip(
        params.weights + params.biases,
        grads.weights + grads.biases,
        state.m_weights + state.m_biases,
        state.v_weights + state.v_biases,
    ):
        if g.shape != p.shape:
            raise ValueError("gradient shape does not match the parameters")
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        p -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
    return params, state


def _clip_global_norm(grads: ParamGradients, max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads.arrays():
            g *= scale


def _crps_batch_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    scores, grads = crps_pwm_grad_batch(outputs, targets)
    return float(scores.mean()), grads / targets.size


def _gaussian_batch_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    mu = outputs[:, 0]
    log_sigma = outputs[:, 1]
    sigma2 = np.exp(2.0 * log_sigma)
    resid = targets - mu
    nll = 0.5 * np.log(2.0 * np.pi * sigma2) + resid**2 / (2.0 * sigma2)
    d_out = np.empty_like(outputs)
    d_out[:, 0] = -resid / sigma2
    d_out[:, 1] = 1.0 - resid**2 / sigma2
    return float(nll.mean()), d_out / targets.size


def _run_training(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_fn,
    head: str,
) -> tuple[ModelParams, TrainHistory, AdamState]:
    if dataset.n_rows < 2:
        raise ValueError("training needs at least two rows")
    if dataset.n_features != model_config.input_dim:
        raise ValueError(
            f"dataset has {dataset.n_features} features but the model expects "
            f"{model_config.input_dim}"
        )

    perm = rng_from_seed(train_config.seed, STREAM_VALID_SPLIT).permutation(dataset.n_rows)
    n_valid = max(1, int(round(train_config.valid_fraction * dataset.n_rows)))
    n_valid = min(n_valid, dataset.n_rows - 1)
    valid_idx, train_idx = perm[:n_valid], perm[n_valid:]
    x_train, y_train = dataset.x[train_idx], dataset.y[train_idx]
    x_valid, y_valid = dataset.x[valid_idx], dataset.y[valid_idx]

    params = init_for_head(model_config, head)
    state = AdamState.zeros_like(params)
    shuffle_rng = rng_from_seed(train_config.seed, STREAM_SHUFFLE)
    dropout_rng = rng_from_seed(train_config.seed, STREAM_DROPOUT)

    history = TrainHistory([], [], best_epoch=0)
    best_valid = np.inf
    best_params = params.copy()
    best_state = state.copy()

    n = x_train.shape[0]
    for epoch in range(train_config.max_epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            outputs, trace = forward(
                params, x_train[batch], mode="train", rng=dropout_rng
            )
            loss, d_out = loss_fn(outputs, y_train[batch])
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            grads = backward(params, trace, d_out)
            _clip_global_norm(grads, train_config.clip_norm)
            adam_step(params, grads, state, train_config)
            loss_sum += loss * batch.size

        valid_out, _ = forward(params, x_valid, mode="eval")
        valid_loss, _ = loss_fn(valid_out, y_valid)
        if not np.isfinite(valid_loss):
            raise DivergenceError(epoch)
        history.train_loss.append(loss_sum / n)
        history.valid_loss.append(valid_loss)

        if valid_loss < best_valid:
            best_valid = valid_loss
            best_params = params.copy()
            best_state = state.copy()
            history.best_epoch = epoch
        elif train_config.patience > 0 and epoch - history.best_epoch >= train_config.patience:
            break
    return best_params, history, best_state


def init_for_head(model_config: ModelConfig, head: str) -> ModelParams:
    if head == "gaussian":
        params = model_mod.init(replace(model_config, k_out=2))
        params.head = "gaussian"
        return params
    return model_mod.init(model_config)


def train(
    dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Train the ensemble head on mean PWM CRPS; returns best-validation params."""
    params, history, _ = train_with_state(dataset, model_config, train_config)
    return params, history


def train_with_state(
    dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig
) -> tuple[ModelParams, TrainHistory, AdamState]:
    """Like :func:`train` but also returns the Adam state at the best epoch
    (for checkpoints that can resume)."""
    return _run_training(dataset, model_config, train_config, _crps_batch_loss, "ensemble")


def train_gaussian_baseline(
    dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Train a (mu, log sigma) head on mean Gaussian NLL; sigma = exp(log sigma) > 0."""
    params, history, _ = _run_training(
        dataset, model_config, train_config, _gaussian_batch_loss, "gaussian"
    )
    return params, history


def predict(params: ModelParams, x) -> np.ndarray:
    """Deterministic single-pass inference: all K samples in one forward.

    Returns (K,) for a single feature vector, (n, K) for a batch.  Drives
    the module forward-row counter up by exactly one per input row.
    """
    single = np.asarray(x).ndim == 1
    outputs, _ = forward(params, x, mode="eval", dropout_active=False)
    return outputs[0] if single else outputs


def predict_mcd(params: ModelParams, x, t_ensembles: int, seed: int = 0) -> np.ndarray:
    """Pool T stochastic forward passes (dropout live) into one big ensemble.

    T = 1 reduces to :func:`predict` (dropout masked off).  For T > 1 the
    model must have dropout_p > 0, and the result has K*T samples per row.
    """
    if t_ensembles < 1:
        raise ValueError("t_ensembles must be >= 1")
    if t_ensembles == 1:
        return predict(params, x)
    if params.config.dropout_p <= 0.0:
        raise ValueError("MC-dropout pooling needs dropout_p > 0")
    single = np.asarray(x).ndim == 1
    rng = rng_from_seed(seed, STREAM_MCD)
    pooled = []
    for _ in range(t_ensembles):
        out, _ = forward(params, x, mode="eval", dropout_active=True, rng=rng)
        pooled.append(out)
    result = np.concatenate(pooled, axis=1)
    return result[0] if single else result


def predict_gaussian(params: ModelParams, x) -> tuple[np.ndarray, np.ndarray]:
    """(mu, sigma) from a Gaussian-head model; sigma is strictly positive."""
    if params.head != "gaussian":
        raise ValueError("params do not hold a gaussian head")
    single = np.asarray(x).ndim == 1
    outputs, _ = forward(params, x, mode="eval", dropout_active=False)
    mu, sigma = outputs[:, 0], np.exp(outputs[:, 1])
    return (mu[0], sigma[0]) if single else (mu, sigma)


def gaussian_pseudo_ensemble(mu, sigma, k: int) -> np.ndarray:
    """Deterministic K-sample stand-in for N(mu, sigma^2): the quantiles at
    plotting positions (j - 0.5)/K.  Lets the ensemble metrics score a
    parametric head on equal footing."""
    if k < 2:
        raise ValueError("k must be >= 2")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be > 0")
    z = norm.ppf((np.arange(k) + 0.5) / k)
    return mu[..., None] + sigma[..., None] * z


def save_checkpoint(
    path,
    params: ModelParams,
    adam_state: AdamState | None = None,
    standardization: Standardization | None = None,
) -> None:
    """Model container plus optimizer-state section (and train-fold stats)."""
    model_mod.save_params(
        params,
        path,
        standardization=standardization,
        adam_moments=adam_state.moments() if adam_state is not None else None,
        adam_step=adam_state.step if adam_state is not None else 0,
    )


def load_checkpoint(path) -> tuple[ModelParams, AdamState | None, Standardization | None]:
    loaded = model_mod.load_params(path)
    state = None
    if loaded.adam_moments is not None:
        state = AdamState(
            [m[0] for m in loaded.adam_moments],
            [m[1] for m in loaded.adam_moments],
            [m[2] for m in loaded.adam_moments],
            [m[3] for m in loaded.adam_moments],
            loaded.adam_step,
        )
    return loaded.params, state, loaded.standardization
