"""Distribution-free probabilistic regression with single-pass ensemble heads.

A feedforward network emits K samples per input in one forward pass; the
ensemble is trained end-to-end against a differentiable discrete CRPS loss
and queried afterwards for CDFs, quantiles, confidence intervals and
calibration metrics (PICP/QICE).
"""

from .data import (
    Dataset,
    FoldPlan,
    ParseError,
    Standardization,
    TOY_TASKS,
    generate_toy,
    load_delimited,
    make_folds,
    make_windows,
    rng_from_seed,
    save_delimited,
    standardize,
)
from .distribution import (
    DistSummary,
    EmpiricalDistribution,
    IntervalEstimate,
    quantile_matrix,
)
from .metrics import (
    MetricsReport,
    batched_metrics,
    compute_metrics,
    crps_mean,
    gaussian_nll,
    picp,
    point_metrics,
    qice,
)
from .model import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    ParamGradients,
    backward,
    forward,
    forward_row_count,
    init,
    load_params,
    reset_forward_row_count,
    save_params,
)
from .scoring import (
    crps_gaussian_closed,
    crps_loss_and_grad,
    crps_naive,
    crps_pwm,
    crps_pwm_grad_batch,
    crps_sorted,
    quantile_score,
)
from .training import (
    AdamState,
    DivergenceError,
    TrainConfig,
    TrainHistory,
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

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Dataset",
    "DistSummary",
    "DivergenceError",
    "EmpiricalDistribution",
    "FoldPlan",
    "ForwardTrace",
    "IntervalEstimate",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "ParamGradients",
    "ParseError",
    "Standardization",
    "TOY_TASKS",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "backward",
    "batched_metrics",
    "compute_metrics",
    "crps_gaussian_closed",
    "crps_loss_and_grad",
    "crps_mean",
    "crps_naive",
    "crps_pwm",
    "crps_pwm_grad_batch",
    "crps_sorted",
    "forward",
    "forward_row_count",
    "gaussian_nll",
    "gaussian_pseudo_ensemble",
    "generate_toy",
    "init",
    "load_checkpoint",
    "load_delimited",
    "load_params",
    "make_folds",
    "make_windows",
    "picp",
    "point_metrics",
    "predict",
    "predict_gaussian",
    "predict_mcd",
    "qice",
    "quantile_matrix",
    "quantile_score",
    "reset_forward_row_count",
    "rng_from_seed",
    "save_checkpoint",
    "save_delimited",
    "save_params",
    "standardize",
    "train",
    "train_gaussian_baseline",
    "train_with_state",
]
