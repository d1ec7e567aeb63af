"""Command-line interface: generate data, train, evaluate, dump distributions.

Conventions:

* exit 0 on success, 1 on runtime failure, 2 on usage errors;
* stdout carries data and metrics only (byte-reproducible given identical
  flags and seeds); progress, timings and diagnostics go to stderr;
* ``--seed`` falls back to the ``DISTPRED_SEED`` environment variable;
* ``--config FILE`` reads flat ``key=value`` lines mirroring the long flag
  names; explicit flags override file entries;
* QICE is printed in percent, CRPS/MSE/MAE in original target units
  (predictions are mapped back through the train-fold standardization).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import training as train_mod
from .distribution import EmpiricalDistribution

STREAM_BENCH = 5000

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class UsageError(ValueError):
    pass


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _fmt(value: float) -> str:
    return repr(float(value))


def _default_seed() -> int:
    env = os.environ.get("DISTPRED_SEED")
    return int(env) if env else 0


# ---------------------------------------------------------------------------
# Config file support


def _read_config_file(path) -> list[str]:
    """Turn ``key=value`` lines into an argv fragment (booleans: true/false)."""
    fragment: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "false"):
                if value.lower() == "true":
                    fragment.append(flag)
            else:
                fragment.extend([flag, value])
    return fragment


def _inject_config(argv: list[str]) -> list[str]:
    """Insert config-file flags right after the subcommand so that any flag
    given on the command line wins (argparse last-occurrence semantics)."""
    path = None
    rest = argv
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file path")
            path = argv[i + 1]
            rest = argv[:i] + argv[i + 2 :]
            break
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            rest = argv[:i] + argv[i + 1 :]
            break
    if path is None:
        return argv
    fragment = _read_config_file(path)
    if not rest:
        raise UsageError("--config requires a subcommand")
    return [rest[0], *fragment, *rest[1:]]


# ---------------------------------------------------------------------------
# Shared flag groups


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=1000, help="ensemble width K (default 1000)")
    p.add_argument(
        "--hidden",
        default="100,100",
        help="comma-separated hidden layer widths (default 100,100; empty for linear)",
    )
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--dropout", type=float, default=0.0, help="dropout probability in [0,1)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=100, help="max training epochs")
    p.add_argument("--patience", type=int, default=10, help="early-stop patience (0 disables)")
    p.add_argument("--batch-size", type=int, default=64)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-header", action="store_true", help="data file has no header row")
    p.add_argument("--target", default=None, help="target column name or index (default: last)")


def _add_seed_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--seed",
        type=int,
        default=None,
        help="RNG seed (default: $DISTPRED_SEED or 0)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distpred",
        description="Distribution-free probabilistic regression via ensemble heads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate a synthetic toy-task dataset")
    p.add_argument("task", choices=data_mod.TOY_TASKS)
    p.add_argument("--n", type=int, default=1000)
    _add_seed_flag(p)
    p.add_argument("--out", required=True, help="output dataset path (comma-delimited)")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("train", help="train an ensemble (or Gaussian) head")
    p.add_argument("data", help="delimited dataset path")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", default=None, help="history CSV path (default: OUT.history.csv)")
    p.add_argument("--folds", type=int, default=1, help="number of resampled 90/10 folds")
    p.add_argument("--fold-index", type=int, default=0, help="which fold to train on")
    p.add_argument("--fold-file", default=None, help="use fold plan from file instead")
    p.add_argument("--gaussian-baseline", action="store_true", help="train the (mu, log sigma) head")
    _add_model_flags(p)
    _add_train_flags(p)
    _add_data_flags(p)
    _add_seed_flag(p)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--m-bins", type=int, default=10, help="QICE bin count (default 10)")
    p.add_argument("--low-pct", type=float, default=0.025)
    p.add_argument("--high-pct", type=float, default=0.975)
    p.add_argument("--mcd-t", type=int, default=None, help="pool T stochastic dropout passes")
    p.add_argument("--per-batch", type=int, default=None, help="average metrics over batches of this size")
    p.add_argument("--k", type=int, default=1000, help="pseudo-ensemble size for gaussian heads")
    _add_data_flags(p)
    _add_seed_flag(p)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict-dist", help="emit per-row distribution plot data")
    p.add_argument("checkpoint")
    p.add_argument(
        "data",
        nargs="?",
        default=None,
        help="delimited dataset whose feature rows to predict (target column ignored)",
    )
    p.add_argument("--x", default=None, help="single input row, comma-separated features")
    p.add_argument("--levels", default="0.9,0.95,0.99", help="CI levels, comma-separated")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count")
    p.add_argument("--kl-bins", type=int, default=50, help="bins for the KL summary term")
    p.add_argument("--out", default=None, help="write to file instead of stdout")
    _add_data_flags(p)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_predict_dist)

    p = sub.add_parser("bench", help="micro-benchmark single-pass inference")
    p.add_argument("checkpoint")
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=3)
    _add_seed_flag(p)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# Helpers shared by commands


def _seed_of(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated integers, got {text!r}") from None


def _parse_target(value):
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return value


def _load_dataset(args) -> data_mod.Dataset:
    return data_mod.load_delimited(
        args.data, has_header=not args.no_header, target_column=_parse_target(args.target)
    )


def _model_config(args, input_dim: int, seed: int) -> model_mod.ModelConfig:
    if args.k < 2:
        raise UsageError("--k must be >= 2: the PWM CRPS loss is undefined for K=1")
    if not 0.0 <= args.dropout < 1.0:
        raise UsageError("--dropout must lie in [0, 1)")
    try:
        return model_mod.ModelConfig(
            input_dim=input_dim,
            hidden_dims=_parse_hidden(args.hidden),
            k_out=args.k,
            activation=args.activation,
            dropout_p=args.dropout,
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _ensembles_in_original_units(params, stats, x_std, args, seed):
    """Predict ensembles for standardized inputs and undo the y-scaling."""
    if getattr(args, "mcd_t", None) is not None:
        if args.mcd_t < 1:
            raise UsageError("--mcd-t must be >= 1")
        if params.config.dropout_p <= 0.0:
            raise UsageError("--mcd-t needs a checkpoint trained with --dropout > 0")
        ensembles = train_mod.predict_mcd(params, x_std, args.mcd_t, seed=seed)
    else:
        ensembles = train_mod.predict(params, x_std)
    if stats is not None:
        ensembles = data_mod.destandardize_y(ensembles, stats)
    return ensembles


def _report_line(report: metrics_mod.MetricsReport) -> str:
    parts = [
        f"picp={_fmt(report.picp)}",
        f"qice_pct={_fmt(report.qice * 100.0)}",
        f"crps={_fmt(report.crps_mean)}",
        f"mse={_fmt(report.mse)}",
        f"mae={_fmt(report.mae)}",
    ]
    if report.nll is not None:
        parts.append(f"nll={_fmt(report.nll)}")
    parts.append(f"n_rows={report.n_rows}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_toy(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    dataset = data_mod.generate_toy(args.task, args.n, _seed_of(args))
    data_mod.save_delimited(dataset, args.out)
    print(f"rows={dataset.n_rows} cols={dataset.n_features + 1}")
    return 0


def cmd_train(args) -> int:
    seed = _seed_of(args)
    dataset = _load_dataset(args)
    if args.fold_file is not None:
        plan = data_mod.load_folds(args.fold_file, dataset.n_rows)
    else:
        if args.folds < 1:
            raise UsageError("--folds must be >= 1")
        plan = data_mod.make_folds(dataset.n_rows, args.folds, seed)
    if not 0 <= args.fold_index < plan.fold_count:
        raise UsageError(f"--fold-index must lie in [0, {plan.fold_count})")
    train_idx, test_idx = plan.folds[args.fold_index]

    std_all = data_mod.standardize(dataset, train_idx)
    stats = std_all.standardization
    train_ds = std_all.subset(train_idx)

    model_config = _model_config(args, dataset.n_features, seed)
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    try:
        train_config = train_mod.TrainConfig(
            lr=args.lr,
            batch_size=args.batch_size,
            max_epochs=args.epochs,
            patience=args.patience,
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    _info(
        f"training on {train_ds.n_rows} rows ({test_idx.size} held out), "
        f"K={args.k}, hidden={list(model_config.hidden_dims)}"
    )
    if args.gaussian_baseline:
        params, history = train_mod.train_gaussian_baseline(train_ds, model_config, train_config)
        state = None
    else:
        params, history, state = train_mod.train_with_state(train_ds, model_config, train_config)
    train_mod.save_checkpoint(args.out, params, adam_state=state, standardization=stats)

    history_path = args.history or f"{args.out}.history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write(history.to_csv())
    _info(f"checkpoint -> {args.out}; history -> {history_path} (best epoch {history.best_epoch})")

    x_test_std = data_mod.standardize_x(dataset.x[test_idx], stats)
    y_test = dataset.y[test_idx]
    if params.head == "gaussian":
        mu, sigma = train_mod.predict_gaussian(params, x_test_std)
        mu = data_mod.destandardize_y(mu, stats)
        sigma = sigma * stats.y_std
        ensembles = train_mod.gaussian_pseudo_ensemble(mu, sigma, args.k)
        nll = metrics_mod.gaussian_nll(mu, sigma, y_test)
    else:
        ensembles = data_mod.destandardize_y(train_mod.predict(params, x_test_std), stats)
        nll = None
    m_bins = min(10, ensembles.shape[1])  # small K still gets a metrics line
    report = metrics_mod.compute_metrics(ensembles, y_test, m_bins=m_bins, nll=nll)
    print(_report_line(report))
    return 0


def cmd_eval(args) -> int:
    seed = _seed_of(args)
    if not 0.0 < args.low_pct < args.high_pct < 1.0:
        raise UsageError("need 0 < --low-pct < --high-pct < 1")
    if args.m_bins < 2:
        raise UsageError("--m-bins must be >= 2")
    params, _, stats = train_mod.load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args)
    if dataset.n_features != params.config.input_dim:
        raise RuntimeError(
            f"dataset has {dataset.n_features} features but the checkpoint expects "
            f"{params.config.input_dim}"
        )
    x_std = data_mod.standardize_x(dataset.x, stats) if stats is not None else dataset.x

    nll = None
    if params.head == "gaussian":
        if args.mcd_t is not None:
            raise UsageError("--mcd-t applies to ensemble heads, not the gaussian baseline")
        if args.k < 2:
            raise UsageError("--k must be >= 2")
        mu, sigma = train_mod.predict_gaussian(params, x_std)
        if stats is not None:
            mu = data_mod.destandardize_y(mu, stats)
            sigma = sigma * stats.y_std
        ensembles = train_mod.gaussian_pseudo_ensemble(mu, sigma, args.k)
        nll = metrics_mod.gaussian_nll(mu, sigma, dataset.y)
    else:
        ensembles = _ensembles_in_original_units(params, stats, x_std, args, seed)

    if ensembles.shape[1] < args.m_bins:
        raise UsageError(
            f"--m-bins {args.m_bins} exceeds the ensemble width {ensembles.shape[1]}"
        )

    if args.per_batch is not None:
        if args.per_batch < 1:
            raise UsageError("--per-batch must be >= 1")
        batches = [
            (ensembles[i : i + args.per_batch], dataset.y[i : i + args.per_batch])
            for i in range(0, dataset.n_rows, args.per_batch)
        ]
        report = metrics_mod.batched_metrics(
            batches, m_bins=args.m_bins, low_pct=args.low_pct, high_pct=args.high_pct
        )
        report.nll = nll
    else:
        report = metrics_mod.compute_metrics(
            ensembles,
            dataset.y,
            m_bins=args.m_bins,
            low_pct=args.low_pct,
            high_pct=args.high_pct,
            nll=nll,
        )
    print(_report_line(report))
    return 0


def _emit_row_sections(fh, row_idx, samples, levels, bins, kl_bins) -> None:
    dist = EmpiricalDistribution(samples)
    k = dist.size
    fh.write(f"row={row_idx}\n")
    fh.write("section=samples\n")
    for v in dist.sorted_samples:
        fh.write(_fmt(v) + "\n")
    fh.write("section=histogram\nleft,right,count\n")
    for left, right, count in dist.histogram(bins):
        fh.write(f"{_fmt(left)},{_fmt(right)},{count}\n")
    fh.write("section=cdf\nvalue,cumprob\n")
    for i, v in enumerate(dist.sorted_samples):
        fh.write(f"{_fmt(v)},{_fmt((i + 1) / k)}\n")
    fh.write("section=ci\nlevel,lower,upper\n")
    for level in levels:
        ci = dist.confidence_interval(level)
        fh.write(f"{_fmt(level)},{_fmt(ci.lower)},{_fmt(ci.upper)}\n")
    if k >= 4:
        raw = dist.summary(kl_bins)
        if raw.stddev > 0.0:
            standardized = EmpiricalDistribution(
                (dist.sorted_samples - raw.mean) / raw.stddev
            )
            kl = standardized.summary(kl_bins).kl_to_std_normal
        else:
            kl = float("inf")
        fh.write("section=summary\nname,value\n")
        fh.write(f"mean,{_fmt(raw.mean)}\n")
        fh.write(f"stddev,{_fmt(raw.stddev)}\n")
        fh.write(f"skewness,{_fmt(raw.skewness)}\n")
        fh.write(f"excess_kurtosis,{_fmt(raw.excess_kurtosis)}\n")
        fh.write(f"kl_to_std_normal,{_fmt(kl)}\n")


def cmd_predict_dist(args) -> int:
    if (args.x is None) == (args.data is None):
        raise UsageError("give exactly one input: --x or a dataset path")
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    try:
        levels = [float(tok) for tok in args.levels.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"--levels expects comma-separated numbers, got {args.levels!r}") from None
    if not levels or any(not 0.0 < lv < 1.0 for lv in levels):
        raise UsageError("--levels entries must lie in (0, 1)")

    params, _, stats = train_mod.load_checkpoint(args.checkpoint)
    if args.x is not None:
        try:
            rows = np.array([[float(tok) for tok in args.x.split(",")]])
        except ValueError:
            raise UsageError(f"--x expects comma-separated numbers, got {args.x!r}") from None
    else:
        rows = _load_dataset(args).x
    if rows.shape[1] != params.config.input_dim:
        raise RuntimeError(
            f"input rows have {rows.shape[1]} features but the checkpoint expects "
            f"{params.config.input_dim}"
        )
    x_std = data_mod.standardize_x(rows, stats) if stats is not None else rows
    if params.head == "gaussian":
        mu, sigma = train_mod.predict_gaussian(params, x_std)
        if stats is not None:
            mu = data_mod.destandardize_y(mu, stats)
            sigma = sigma * stats.y_std
        ensembles = train_mod.gaussian_pseudo_ensemble(mu, sigma, 1000)
    else:
        ensembles = train_mod.predict(params, x_std)
        if stats is not None:
            ensembles = data_mod.destandardize_y(ensembles, stats)

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for i in range(ensembles.shape[0]):
            _emit_row_sections(out, i, ensembles[i], levels, args.bins, args.kl_bins)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_bench(args) -> int:
    if args.rows < 1 or args.repeats < 1:
        raise UsageError("--rows and --repeats must be >= 1")
    params, _, _ = train_mod.load_checkpoint(args.checkpoint)
    rng = data_mod.rng_from_seed(_seed_of(args), STREAM_BENCH)
    x = rng.normal(size=(args.rows, params.config.input_dim))

    model_mod.reset_forward_row_count()
    ensembles = train_mod.predict(params, x)
    forward_rows = model_mod.forward_row_count()

    elapsed = []
    for rep in range(args.repeats):
        t0 = time.perf_counter()
        train_mod.predict(params, x)
        dt = time.perf_counter() - t0
        elapsed.append(dt)
        _info(f"repeat {rep}: {dt:.6f} s")
    median = float(np.median(elapsed))
    k = ensembles.shape[1]
    _info(f"median {median:.6f} s; {args.rows * k / median:.0f} samples/s")

    match = "true" if forward_rows == args.rows else "false"
    print(f"rows={args.rows} forward_rows={forward_rows} k={k} repeats={args.repeats} match={match}")
    return 0 if forward_rows == args.rows else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
    except UsageError as exc:
        parser.exit(USAGE_ERROR, f"error: {exc}\n")
    except OSError as exc:
        parser.exit(USAGE_ERROR, f"error: cannot read config file: {exc}\n")
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (data_mod.ParseError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
