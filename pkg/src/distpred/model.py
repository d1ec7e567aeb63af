"""Feedforward ensemble-head network with hand-rolled backprop.

One forward pass maps a feature vector to K output samples that together
represent the predictive distribution for that input.  Gradients are
accumulated in reverse mode through the stored trace (pre-activations,
activations, dropout masks), so the whole package stays numpy-only.

Parameters serialize to a versioned binary container:

    magic "DPRD" | version u16 | head u8 | activation u8 | dropout_p f64
    | seed u64 | input_dim u32 | k_out u32 | n_hidden u32 | hidden dims u32...
    | per layer: W (fan_in x fan_out, row-major f64 LE) then b (f64 LE)
    | standardization section: flag u8 [+ P u32, x_mean, x_std, y_mean, y_std]
    | optimizer section:       flag u8 [+ step u64, per layer mW, mb, vW, vb]

All floats little-endian f64; round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Standardization, rng_from_seed

_MAGIC = b"DPRD"
_FORMAT_VERSION = 1
_ACT_CODES = {"relu": 0, "tanh": 1}
_HEAD_CODES = {"ensemble": 0, "gaussian": 1}

STREAM_INIT = 2000

# Rows pushed through forward() since the last reset; predict() must drive
# this up by exactly one per input row (single-pass inference contract).
_forward_rows = 0


def forward_row_count() -> int:
    return _forward_rows


def reset_forward_row_count() -> None:
    global _forward_rows
    _forward_rows = 0


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    k_out: int
    activation: str = "relu"
    dropout_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be >= 1")
        if self.k_out < 2:
            raise ValueError("k_out must be >= 2 (the PWM loss needs K >= 2)")
        if self.activation not in _ACT_CODES:
            raise ValueError(f"activation must be one of {sorted(_ACT_CODES)}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.k_out]


@dataclass(eq=False)
class ModelParams:
    """Per-layer weights (fan_in x fan_out) and biases; head marks the output type."""

    config: ModelConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "ensemble"

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
        )


@dataclass
class ParamGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class ForwardTrace:
    """Everything backward() needs from one minibatch forward pass."""

    layer_inputs: list[np.ndarray]  # input to each linear layer, (n, fan_in)
    pre_activations: list[np.ndarray]  # hidden-layer z values, (n, width)
    dropout_masks: list[np.ndarray | None]  # inverted-dropout masks or None


def init(config: ModelConfig) -> ModelParams:
    """Seeded uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = rng_from_seed(config.seed, STREAM_INIT)
    dims = config.layer_dims()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(config, weights, biases)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(float)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(
    params: ModelParams,
    x,
    mode: str = "eval",
    dropout_active: bool | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on a minibatch (or a single feature vector).

    Args:
        params: network parameters.
        x: (n, input_dim) batch or (input_dim,) single row.
        mode: "train" or "eval"; in train mode dropout defaults to on
            (whenever the config has dropout_p > 0).
        dropout_active: explicit dropout override, e.g. stochastic eval
            passes; requires ``rng`` when it ends up enabled.
        rng: mask source for dropout.

    Returns:
        (outputs (n, k_out), trace).  Without dropout the map is
        deterministic.  Masks use inverted dropout (scaled by 1/(1-p)) so
        deterministic passes need no rescaling.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    cfg = params.config
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != cfg.input_dim:
        raise ValueError(f"input must have {cfg.input_dim} features, got shape {a.shape}")

    if dropout_active is None:
        dropout_active = mode == "train"
    use_dropout = bool(dropout_active) and cfg.dropout_p > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout requires an rng for the mask draw")

    global _forward_rows
    _forward_rows += a.shape[0]

    layer_inputs, pre_acts, masks = [], [], []
    n_layers = len(params.weights)
    for layer in range(n_layers):
        layer_inputs.append(a)
        z = a @ params.weights[layer] + params.biases[layer]
        if layer == n_layers - 1:
            a = z  # linear output head
        else:
            pre_acts.append(z)
            a = _activate(z, cfg.activation)
            if use_dropout:
                keep = rng.random(a.shape) >= cfg.dropout_p
                mask = keep / (1.0 - cfg.dropout_p)
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
    return a, ForwardTrace(layer_inputs, pre_acts, masks)


def backward(params: ModelParams, trace: ForwardTrace, loss_grad) -> ParamGradients:
    """Reverse-mode gradients of a scalar loss through the stored trace.

    Args:
        loss_grad: (n, k_out) array of d loss / d output.

    Returns:
        Gradients shaped exactly like ``params``.
    """
    cfg = params.config
    delta = np.asarray(loss_grad, dtype=float)
    if delta.ndim == 1:
        delta = delta[None, :]
    n_layers = len(params.weights)
    if delta.shape != (trace.layer_inputs[0].shape[0], params.weights[-1].shape[1]):
        raise ValueError("loss_grad shape does not match the traced forward pass")

    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        d_weights[layer] = trace.layer_inputs[layer].T @ delta
        d_biases[layer] = delta.sum(axis=0)
        if layer > 0:
            da = delta @ params.weights[layer].T
            mask = trace.dropout_masks[layer - 1]
            if mask is not None:
                da = da * mask
            delta = da * _activation_grad(trace.pre_activations[layer - 1], cfg.activation)
    return ParamGradients(d_weights, d_biases)


# ---------------------------------------------------------------------------
# Binary container


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_array(buf: memoryview, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + 8 * count
    arr = np.frombuffer(buf[offset:end], dtype="<f8").reshape(shape).copy()
    return arr, end


def save_params(
    params: ModelParams,
    path,
    standardization: Standardization | None = None,
    adam_moments: list[tuple[np.ndarray, ...]] | None = None,
    adam_step: int = 0,
) -> None:
    """Write the binary container; optional sections carry the train-fold
    standardization statistics and Adam moment accumulators."""
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", _FORMAT_VERSION, _HEAD_CODES[params.head], _ACT_CODES[cfg.activation]))
        fh.write(struct.pack("<dQ", cfg.dropout_p, cfg.seed))
        fh.write(struct.pack("<III", cfg.input_dim, params.weights[-1].shape[1], len(cfg.hidden_dims)))
        fh.write(struct.pack(f"<{len(cfg.hidden_dims)}I", *cfg.hidden_dims))
        for w, b in zip(params.weights, params.biases):
            _write_array(fh, w)
            _write_array(fh, b)

        if standardization is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<I", standardization.x_mean.size))
            _write_array(fh, standardization.x_mean)
            _write_array(fh, standardization.x_std)
            fh.write(struct.pack("<dd", standardization.y_mean, standardization.y_std))

        if adam_moments is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<BQ", 1, adam_step))
            for arrays in adam_moments:
                for arr in arrays:
                    _write_array(fh, arr)


@dataclass
class LoadedParams:
    params: ModelParams
    standardization: Standardization | None = None
    adam_moments: list[tuple[np.ndarray, ...]] | None = None
    adam_step: int = 0


def load_params(path) -> LoadedParams:
    """Read a container written by :func:`save_params` (bit-exact round trip)."""
    with open(path, "rb") as fh:
        raw = memoryview(fh.read())
    if bytes(raw[:4]) != _MAGIC:
        raise ValueError(f"{path}: not a model container (bad magic)")
    version, head_code, act_code = struct.unpack_from("<HBB", raw, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    offset = 8
    dropout_p, seed = struct.unpack_from("<dQ", raw, offset)
    offset += 16
    input_dim, out_dim, n_hidden = struct.unpack_from("<III", raw, offset)
    offset += 12
    hidden = struct.unpack_from(f"<{n_hidden}I", raw, offset)
    offset += 4 * n_hidden

    head = {v: k for k, v in _HEAD_CODES.items()}[head_code]
    activation = {v: k for k, v in _ACT_CODES.items()}[act_code]
    config = ModelConfig(
        input_dim=input_dim,
        hidden_dims=tuple(hidden),
        k_out=out_dim,
        activation=activation,
        dropout_p=dropout_p,
        seed=seed,
    )
    dims = [input_dim, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w, offset = _read_array(raw, offset, (fan_in, fan_out))
        b, offset = _read_array(raw, offset, (fan_out,))
        weights.append(w)
        biases.append(b)
    params = ModelParams(config, weights, biases, head=head)

    (std_flag,) = struct.unpack_from("<B", raw, offset)
    offset += 1
    standardization = None
    if std_flag:
        (p,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        x_mean, offset = _read_array(raw, offset, (p,))
        x_std, offset = _read_array(raw, offset, (p,))
        y_mean, y_std = struct.unpack_from("<dd", raw, offset)
        offset += 16
        standardization = Standardization(x_mean, x_std, y_mean, y_std)

    (opt_flag,) = struct.unpack_from("<B", raw, offset)
    offset += 1
    adam_moments = None
    adam_step = 0
    if opt_flag:
        (adam_step,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        adam_moments = []
        for w, b in zip(weights, biases):
            mw, offset = _read_array(raw, offset, w.shape)
            mb, offset = _read_array(raw, offset, b.shape)
            vw, offset = _read_array(raw, offset, w.shape)
            vb, offset = _read_array(raw, offset, b.shape)
            adam_moments.append((mw, mb, vw, vb))
    return LoadedParams(params, standardization, adam_moments, int(adam_step))
