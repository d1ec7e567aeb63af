"""Datasets: synthetic toy tasks, delimited-text IO, folds, standardization.

All randomness flows through Philox, a counter-based 64-bit generator, so
every dataset, fold plan and split is bit-reproducible from (parameters,
seed).  Each use site gets its own stream constant (second key word) to
keep streams independent even when seeds coincide; see :func:`rng_from_seed`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOY_TASKS = (
    "linear",
    "quadratic",
    "sinusoidal",
    "loglog_linear",
    "loglog_cubic",
    "inverse_sinusoidal",
    "eight_gaussians",
    "full_circle",
)

# Stream ids for rng_from_seed.  Fold f uses STREAM_FOLDS + f.
STREAM_TOY = 100
STREAM_FOLDS = 1000


class ParseError(ValueError):
    """Malformed delimited text; carries 1-based row/column context."""

    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.column = column


def rng_from_seed(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed on (seed, stream).

    Philox with a two-word key; identical (seed, stream) pairs always
    reproduce the same draw sequence, independent of call order elsewhere.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Standardization:
    """Column statistics used to center/scale a dataset (train-fold only)."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float


@dataclass
class Dataset:
    """Feature matrix x (N x P), scalar targets y (N,) plus column names."""

    x: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    target_name: str = "y"
    standardization: Standardization | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-D matrix")
        if self.y.ndim != 1 or self.y.shape[0] != self.x.shape[0]:
            raise ValueError("y must be 1-D with one entry per row of x")
        if self.x.shape[0] < 1 or self.x.shape[1] < 1:
            raise ValueError("dataset must have at least one row and one feature")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset values must be finite")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            self.x[indices],
            self.y[indices],
            list(self.feature_names),
            self.target_name,
            self.standardization,
        )


@dataclass
class FoldPlan:
    """Per-fold (train, test) index splits of range(n); resampled shuffles."""

    fold_count: int
    folds: list[tuple[np.ndarray, np.ndarray]]
    seed: int


def generate_toy(task: str, n: int, seed: int) -> Dataset:
    """Generate one of the eight synthetic regression tasks.

    Generating equations (fixed, documented constants):

    * linear:             x ~ U[-5, 5],   y = 2x + 1 + e,           e ~ N(0, 1)
    * quadratic:          x ~ U[-5, 5],   y = 0.5 x^2 - x + 2 + e,  e ~ N(0, 1)
    * sinusoidal:         x ~ U[-5, 5],   y = 3 sin(x) + e,         e ~ N(0, 1)
    * loglog_linear:      x ~ U[0.5, 10], log y = 0.5 + 1.2 log x + 0.3 e
    * loglog_cubic:       x ~ U[0.5, 10], log y = 1 + 0.3 (log x)^3 + 0.3 e
    * inverse_sinusoidal: x/y role swap of sinusoidal (y|x multimodal)
    * eight_gaussians:    uniform component label on a radius-4 circle of
                          8 centers, isotropic sigma 0.3 around each
    * full_circle:        angle ~ U[0, 2pi), radius = 4 + 0.3 N(0, 1)

    The first three have unimodal symmetric noise, the loglog pair is
    heteroscedastic in the original units, and the last three are
    multimodal in y given x.
    """
    if task not in TOY_TASKS:
        raise ValueError(f"unknown toy task {task!r}; expected one of {', '.join(TOY_TASKS)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_from_seed(seed, STREAM_TOY)

    if task == "linear":
        x = rng.uniform(-5.0, 5.0, size=n)
        y = 2.0 * x + 1.0 + rng.normal(size=n)
    elif task == "quadratic":
        x = rng.uniform(-5.0, 5.0, size=n)
        y = 0.5 * x**2 - x + 2.0 + rng.normal(size=n)
    elif task == "sinusoidal":
        x = rng.uniform(-5.0, 5.0, size=n)
        y = 3.0 * np.sin(x) + rng.normal(size=n)
    elif task == "loglog_linear":
        x = rng.uniform(0.5, 10.0, size=n)
        y = np.exp(0.5 + 1.2 * np.log(x) + 0.3 * rng.normal(size=n))
    elif task == "loglog_cubic":
        x = rng.uniform(0.5, 10.0, size=n)
        y = np.exp(1.0 + 0.3 * np.log(x) ** 3 + 0.3 * rng.normal(size=n))
    elif task == "inverse_sinusoidal":
        t = rng.uniform(-5.0, 5.0, size=n)
        w = 3.0 * np.sin(t) + rng.normal(size=n)
        x, y = w, t
    elif task == "eight_gaussians":
        j = rng.integers(0, 8, size=n)
        theta = 2.0 * np.pi * j / 8.0
        x = 4.0 * np.cos(theta) + 0.3 * rng.normal(size=n)
        y = 4.0 * np.sin(theta) + 0.3 * rng.normal(size=n)
    else:  # full_circle
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r = 4.0 + 0.3 * rng.normal(size=n)
        x = r * np.cos(theta)
        y = r * np.sin(theta)

    return Dataset(x.reshape(-1, 1), y, feature_names=["x"], target_name="y")


def _detect_delimiter(line: str) -> str | None:
    return "," if "," in line else None  # None => any whitespace


def load_delimited(path, has_header: bool = True, target_column=None) -> Dataset:
    """Load a comma- or whitespace-delimited numeric table.

    Args:
        path: readable text file (UTF-8).
        has_header: first non-blank line holds column names.
        target_column: name (header required), integer index, or None for
            the last column.

    Raises:
        OSError: unreadable path.
        ParseError: ragged rows, non-numeric cells, or a target column
            that does not exist.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: no data rows")
    delim = _detect_delimiter(lines[0])

    def split(line):
        return [f.strip() for f in line.split(delim)] if delim else line.split()

    names = None
    if has_header:
        names = split(lines[0])
        lines = lines[1:]
        if not lines:
            raise ParseError(f"{path}: header but no data rows")

    n_cols = len(split(lines[0]))
    if names is not None and len(names) != n_cols:
        raise ParseError(f"{path}: header has {len(names)} fields, rows have {n_cols}")
    values = np.empty((len(lines), n_cols), dtype=float)
    for i, line in enumerate(lines):
        fields = split(line)
        row_no = i + (2 if has_header else 1)
        if len(fields) != n_cols:
            raise ParseError(
                f"{path}: expected {n_cols} fields, got {len(fields)}", row=row_no
            )
        for jcol, field in enumerate(fields):
            try:
                values[i, jcol] = float(field)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {field!r}", row=row_no, column=jcol + 1
                ) from None

    if names is None:
        names = [f"col{j}" for j in range(n_cols)]

    if target_column is None:
        target_idx = n_cols - 1
    elif isinstance(target_column, int):
        if not -n_cols <= target_column < n_cols:
            raise ParseError(f"{path}: target column index {target_column} out of range")
        target_idx = target_column % n_cols
    else:
        if target_column not in names:
            raise ParseError(
                f"{path}: target column {target_column!r} not found; "
                f"available: {', '.join(names)}"
            )
        target_idx = names.index(target_column)

    keep = [j for j in range(n_cols) if j != target_idx]
    if not keep:
        raise ParseError(f"{path}: table needs at least one feature besides the target")
    return Dataset(
        values[:, keep],
        values[:, target_idx],
        feature_names=[names[j] for j in keep],
        target_name=names[target_idx],
    )


def save_delimited(dataset: Dataset, path) -> None:
    """Write a dataset back as comma-delimited text (values round-trip exactly)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([*dataset.feature_names, dataset.target_name]) + "\n")
        for i in range(dataset.n_rows):
            cells = [repr(float(v)) for v in dataset.x[i]]
            cells.append(repr(float(dataset.y[i])))
            fh.write(",".join(cells) + "\n")


def make_folds(n: int, fold_count: int, seed: int) -> FoldPlan:
    """Independent resampled 90/10 shuffles (not a rotated partition)."""
    if n < 10:
        raise ValueError("need n >= 10 to carve a 10% test split")
    if fold_count < 1:
        raise ValueError("fold_count must be >= 1")
    n_test = max(1, int(round(0.1 * n)))
    folds = []
    for f in range(fold_count):
        perm = rng_from_seed(seed, STREAM_FOLDS + f).permutation(n)
        folds.append((np.sort(perm[n_test:]), np.sort(perm[:n_test])))
    return FoldPlan(fold_count, folds, seed)


def save_folds(plan: FoldPlan, path) -> None:
    """One fold per line: the test indices, space-separated (train = complement)."""
    with open(path, "w", encoding="utf-8") as fh:
        for _, test_idx in plan.folds:
            fh.write(" ".join(str(int(i)) for i in test_idx) + "\n")


def load_folds(path, n: int) -> FoldPlan:
    """Rebuild a fold plan from test-index lines written by :func:`save_folds`."""
    folds = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                test_idx = np.array(sorted(int(tok) for tok in line.split()), dtype=int)
            except ValueError:
                raise ParseError(f"{path}: non-integer fold index", row=line_no) from None
            if test_idx.size and (test_idx[0] < 0 or test_idx[-1] >= n):
                raise ParseError(f"{path}: fold index out of range for n={n}", row=line_no)
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            folds.append((np.nonzero(mask)[0], test_idx))
    if not folds:
        raise ParseError(f"{path}: no folds found")
    return FoldPlan(len(folds), folds, seed=0)


def standardize(dataset: Dataset, train_indices) -> Dataset:
    """Center/scale x columns and y using train-fold statistics only.

    Zero-variance columns keep std = 1 so they pass through unscaled.
    The fitted statistics ride along on the returned dataset for the
    inverse transform (:func:`destandardize_y`).
    """
    train_indices = np.asarray(train_indices, dtype=int)
    if train_indices.size == 0:
        raise ValueError("train_indices must be non-empty")
    x_train = dataset.x[train_indices]
    y_train = dataset.y[train_indices]
    x_mean = x_train.mean(axis=0)
    x_std = x_train.std(axis=0)
    x_std = np.where(x_std > 0.0, x_std, 1.0)
    y_mean = float(y_train.mean())
    y_std = float(y_train.std())
    if y_std <= 0.0:
        y_std = 1.0
    stats = Standardization(x_mean, x_std, y_mean, y_std)
    return Dataset(
        (dataset.x - x_mean) / x_std,
        (dataset.y - y_mean) / y_std,
        list(dataset.feature_names),
        dataset.target_name,
        standardization=stats,
    )


def standardize_x(x: np.ndarray, stats: Standardization) -> np.ndarray:
    return (np.asarray(x, dtype=float) - stats.x_mean) / stats.x_std


def destandardize_y(values: np.ndarray, stats: Standardization) -> np.ndarray:
    """Map standardized target-space values back to original units."""
    return np.asarray(values, dtype=float) * stats.y_std + stats.y_mean


def make_windows(series, input_len: int, horizon: int, target_column: int = 0) -> list[Dataset]:
    """Stride-1 sliding windows for forecasting.

    Args:
        series: 1-D series or 2-D (length x features) matrix.
        input_len: window width; the window is flattened into x.
        horizon: number of future steps; one Dataset is returned per step,
            each holding the scalar target at that step.
        target_column: which series column supplies targets (2-D input).

    Returns:
        List of ``horizon`` Datasets, each with
        ``len(series) - input_len - horizon + 1`` rows.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("series must be 1-D or 2-D")
    if input_len < 1 or horizon < 1:
        raise ValueError("input_len and horizon must be >= 1")
    length, n_feat = arr.shape
    n_windows = length - input_len - horizon + 1
    if n_windows < 1:
        raise ValueError(
            f"series of length {length} too short for input_len={input_len}, horizon={horizon}"
        )
    if not 0 <= target_column < n_feat:
        raise ValueError("target_column out of range")

    x = np.empty((n_windows, input_len * n_feat))
    for i in range(n_windows):
        x[i] = arr[i : i + input_len].ravel()
    names = [f"t-{input_len - 1 - j}_f{c}" for j in range(input_len) for c in range(n_feat)]
    out = []
    for h in range(horizon):
        y = arr[input_len + h : input_len + h + n_windows, target_column]
        out.append(Dataset(x.copy(), y, feature_names=list(names), target_name=f"t+{h + 1}"))
    return out
