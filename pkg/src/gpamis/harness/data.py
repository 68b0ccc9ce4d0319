"""Dataset ingestion: headerless CSV, last column is the target."""

import csv
import math
from collections import Counter
from pathlib import Path

import numpy as np

from ..errors import EmptyDataset, MalformedRow
from ..gp.kernels import Dataset


def _read_rows(path):
    rows = []
    width = None
    with open(path, newline="") as fh:
        for line_number, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise MalformedRow(path, line_number, "need at least one feature column and a target column")
            if len(row) != width:
                raise MalformedRow(path, line_number, f"expected {width} columns, found {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise MalformedRow(path, line_number, str(exc)) from None
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    return np.array(rows)


def binarize_labels(raw, positive_class=None):
    """Map labels to +/-1, one-vs-rest around ``positive_class``.

    Default positive class is the most frequent label (ties go to the
    smallest label value).
    """
    raw = np.asarray(raw, dtype=float)
    if positive_class is None or positive_class == "":
        counts = Counter(raw.tolist())
        positive_class = min(counts, key=lambda c: (-counts[c], c))
    positive_class = float(positive_class)
    if not np.any(raw == positive_class):
        raise ValueError(f"positive class {positive_class:g} does not occur in the data")
    return np.where(raw == positive_class, 1.0, -1.0), positive_class


def standardize(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mean) / sd


def load_dataset(path, task="regression", subsample=None, seed=0, positive_class=None):
    """Read, optionally subsample (seeded, without replacement), and standardize.

    Features are scaled to mean 0 / sd 1 per column after subsampling;
    regression targets are centered; classification targets become +/-1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    data = _read_rows(path)
    if subsample:
        if subsample > data.shape[0]:
            raise ValueError(f"subsample {subsample} exceeds dataset size {data.shape[0]}")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x5EED])))
        idx = np.sort(rng.choice(data.shape[0], size=int(subsample), replace=False))
        data = data[idx]
    X = standardize(data[:, :-1])
    meta = {"path": str(path), "rows": data.shape[0]}
    if task == "regression":
        y = data[:, -1] - data[:, -1].mean()
    elif task == "classification":
        y, pos = binarize_labels(data[:, -1], positive_class)
        meta["positive_class"] = pos
    else:
        raise ValueError(f"unknown task {task!r}")
    return Dataset(X, y, task=task, name=path.stem, meta=meta)


def synthetic_regression(n, d=2, seed=0, log_theta=(0.0, 0.0, math.log(0.1))):
    """Draw inputs uniformly and targets from an RBF GP with noise."""
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.uniform(-2.0, 2.0, size=(n, d))
    sigma, tau, lam = np.exp(log_theta)
    sq = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    C = sigma * np.exp(-sq / tau**2) + lam * np.eye(n)
    y = np.linalg.cholesky(C + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
    return X, y


def write_csv(path, X, y):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row, target in zip(np.atleast_2d(X), y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    return path


def describe(dataset):
    """Summary used by the ``inspect`` subcommand."""
    info = {"name": dataset.name, "task": dataset.task, "n": dataset.n, "d": dataset.d}
    if dataset.task == "classification":
        info["positives"] = int(np.sum(dataset.y > 0))
        info["negatives"] = int(np.sum(dataset.y < 0))
    else:
        info["target_sd"] = float(dataset.y.std())
    return info
