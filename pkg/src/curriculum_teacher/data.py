"""Datasets: synthetic blobs, CSV ingestion, stratified splits, scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from .curriculum import Dataset
from .exceptions import ConfigurationError


def synth_blobs(n_classes=4, n_per_class=500, dim=8, spread=0.5, seed=0):
    """Isotropic Gaussian clusters whose means sit one unit apart on a line.

    Class ``k`` has mean ``k * u`` with ``u`` the normalised all-ones vector
    and per-coordinate standard deviation ``spread``.
    """
    if min(n_classes, n_per_class, dim) < 1:
        raise ConfigurationError("n_classes, n_per_class and dim must be >= 1")
    if spread < 0:
        raise ConfigurationError("spread must be >= 0")
    rng = np.random.default_rng(seed)
    direction = np.full(dim, 1.0 / np.sqrt(dim))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    means = labels[:, None] * direction[None, :]
    features = means + spread * rng.standard_normal((labels.size, dim))
    return Dataset(features, labels, n_classes)


@dataclass
class SplitSpec:
    train: float = 0.60
    validation: float = 0.20
    test: float = 0.20
    balance_train: bool = True

    def __post_init__(self):
        if min(self.train, self.validation, self.test) <= 0:
            raise ConfigurationError("split fractions must be positive")
        if abs(self.train + self.validation + self.test - 1.0) > 1e-9:
            raise ConfigurationError("split fractions must sum to 1")


class Splits(NamedTuple):
    train: Dataset
    validation: Dataset
    test: Dataset


def split_indices(labels, spec, seed):
    """Stratified index split; returns ``(train, validation, test)`` index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if rows.size < 5:
            raise ConfigurationError(f"class {c} has only {rows.size} rows; need at least 5")
        rows = rng.permutation(rows)
        n_train = int(round(spec.train * rows.size))
        n_val = int(round(spec.validation * rows.size))
        parts[0].append(rows[:n_train])
        parts[1].append(rows[n_train:n_train + n_val])
        parts[2].append(rows[n_train + n_val:])
    train, val, test = (np.sort(np.concatenate(p)) for p in parts)
    if spec.balance_train:
        counts = {c: np.flatnonzero(labels[train] == c) for c in np.unique(labels[train])}
        keep = min(len(v) for v in counts.values())
        train = np.sort(np.concatenate([train[v[rng.permutation(len(v))[:keep]]]
                                        for v in counts.values()]))
    return train, val, test


def split(dataset, spec=None, seed=0):
    spec = spec or SplitSpec()
    return Splits(*(dataset.subset(idx) for idx in split_indices(dataset.labels, spec, seed)))


def standardize(splits):
    """Z-score every split with statistics of the training split."""
    scaler = StandardScaler().fit(splits.train.features)
    return Splits(*(Dataset(scaler.transform(s.features), s.labels, s.n_classes) for s in splits)), scaler


def read_table(path, label_column="label", categorical=None):
    """Read a CSV, one-hot categorical columns, and return ``(features_frame, labels)``.

    Non-numeric columns (plus any named in ``categorical``) are expanded with
    lexicographically ordered categories. Missing values are rejected.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if label_column not in frame.columns:
        raise ConfigurationError(f"label column {label_column!r} not in {list(frame.columns)}")
    if frame.isna().any().any():
        bad = [c for c in frame.columns if frame[c].isna().any()]
        raise ConfigurationError(f"missing values in columns {bad}")
    labels_raw = frame.pop(label_column)
    categorical = set(categorical or ())
    categorical |= {c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])}
    pieces = []
    for col in frame.columns:
        if col in categorical:
            values = frame[col].astype(str)
            for cat in sorted(values.unique()):
                pieces.append(pd.Series((values == cat).astype(np.float64), name=f"{col}={cat}"))
        else:
            pieces.append(frame[col].astype(np.float64))
    features = pd.concat(pieces, axis=1) if pieces else pd.DataFrame(index=frame.index)
    classes = sorted(labels_raw.unique(), key=lambda v: (str(type(v)), v))
    lookup = {v: i for i, v in enumerate(classes)}
    labels = labels_raw.map(lookup).to_numpy(dtype=np.int64)
    return features, labels, classes


def load_csv(path, label_column="label", categorical=None):
    features, labels, classes = read_table(path, label_column, categorical)
    return Dataset(features.to_numpy(), labels, len(classes))


def write_csv(path, dataset, feature_names=None, label_column="label"):
    names = feature_names or [f"x{j}" for j in range(dataset.d)]
    frame = pd.DataFrame(dataset.features, columns=names)
    frame[label_column] = dataset.labels
    frame.to_csv(path, index=False, float_format="%.17g")
