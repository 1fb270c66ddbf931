"""Datasets: synthesis, CSV ingestion, min-max scaling, fold splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PIMA_FEATURES = [
    "Pregnancies",
    "Glucose",
    "BloodPressure",
    "SkinThickness",
    "Insulin",
    "BMI",
    "DiabetesPedigreeFunction",
    "Age",
]


@dataclass(frozen=True)
class Dataset:
    """Raw feature matrix and binary labels.

    Features are kept in original units; scaling to [0, 1] is fitted per fold
    on that fold's training part (see :class:`FoldSplit`), so that scaler
    parameters never depend on validation-pool or test rows.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X/y shape mismatch: {X.shape} vs {y.shape}")
        if not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", [f"f{i}" for i in range(X.shape[1])]
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


class Scaler:
    """Per-feature min-max scaler; out-of-range values are clipped to [0, 1]."""

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=np.float64)
        self.maxs = np.asarray(maxs, dtype=np.float64)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        mins = X.min(axis=0)
        maxs = X.max(axis=0)
        constant = np.where(mins >= maxs)[0]
        if constant.size:
            raise ValueError(
                f"constant feature(s) at column(s) {constant.tolist()}: min == max"
            )
        return cls(mins, maxs)

    def transform(self, X: np.ndarray) -> np.ndarray:
        scaled = (X - self.mins) / (self.maxs - self.mins)
        n_clipped = int(np.sum((scaled < 0) | (scaled > 1)))
        if n_clipped:
            logger.info("scaler: clipped %d out-of-range values to [0, 1]", n_clipped)
        return np.clip(scaled, 0.0, 1.0)

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        return X * (self.maxs - self.mins) + self.mins


@dataclass
class FoldSplit:
    """One 40/40/20 split plus the scaler fitted on its training part."""

    fold_index: int
    train_idx: np.ndarray
    valpool_idx: np.ndarray
    test_idx: np.ndarray
    scaler: Scaler

    def scaled(self, dataset: Dataset, part: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "valpool": self.valpool_idx, "test": self.test_idx}[part]
        return self.scaler.transform(dataset.X[idx]), dataset.y[idx]


def make_moons(n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved half-circle classes, n/2 points each.

    Gaussian noise with the given stdev is added before any scaling. n must be
    even so that the class balance is exactly 50/50.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if n % 2:
        raise ValueError(f"n must be even for an exact 50/50 class balance, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([outer, inner])
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    rng = np.random.default_rng(seed)
    if noise > 0:
        X = X + rng.normal(0.0, noise, size=X.shape)
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], feature_names=["x1", "x2"])


def make_diabetes_like(n: int = 768, seed: int = 20) -> Dataset:
    """Synthetic stand-in for the Pima diabetes table (768 x 8, ~35% positive).

    Marginals roughly match the published summary statistics; the label is a
    noisy logistic function of glucose, BMI, age, pedigree and pregnancies so
    the classes overlap near the boundary but stay pure in the tails (an MLP
    reaches ~0.85 accuracy, not 1.0).
    """
    rng = np.random.default_rng(seed)
    preg = rng.poisson(3.2, n).astype(np.float64)
    glucose = np.clip(rng.normal(121.0, 30.0, n), 44.0, 199.0)
    bp = np.clip(rng.normal(69.0, 12.0, n), 24.0, 122.0)
    skin = np.clip(rng.normal(26.0 + 0.25 * (glucose - 121.0) / 30.0, 9.0, n), 7.0, 63.0)
    insulin = np.clip(rng.lognormal(4.4, 0.7, n) + 0.8 * (glucose - 121.0), 14.0, 846.0)
    bmi = np.clip(rng.normal(32.0 + 0.15 * skin, 6.0, n) - 0.15 * 26.0, 18.0, 67.0)
    pedigree = np.clip(rng.gamma(2.3, 0.21, n), 0.078, 2.42)
    age = np.clip(21.0 + rng.gamma(1.6, 7.4, n), 21.0, 81.0)

    z = (
        0.22 * (glucose - 121.0)
        + 0.44 * (bmi - 32.0)
        + 0.14 * (age - 33.0)
        + 4.4 * (pedigree - 0.47)
        + 0.28 * (preg - 3.2)
        - 3.12
    )
    p = 1.0 / (1.0 + np.exp(-z))
    y = (rng.random(n) < p).astype(np.int64)
    X = np.column_stack([preg, glucose, bp, skin, insulin, bmi, pedigree, age])
    return Dataset(X, y, feature_names=list(PIMA_FEATURES))


def load_csv(
    path,
    label_column: str,
    positive_label,
    drop_columns: tuple[str, ...] = (),
) -> Dataset:
    """Load a binary tabular dataset from a CSV file.

    Rows with missing values are dropped (count logged). The label column is
    mapped to 1 where it equals positive_label, 0 elsewhere; all remaining
    columns must parse as floats.
    """
    df = pd.read_csv(path)
    if label_column not in df.columns:
        raise ValueError(f"label column {label_column!r} not found in {list(df.columns)}")
    df = df.drop(columns=[c for c in drop_columns if c in df.columns])

    feature_cols = [c for c in df.columns if c != label_column]
    parsed = {}
    for col in feature_cols:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna() & df[col].notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ValueError(
                f"non-numeric value {df[col].iloc[row]!r} at row {row}, column {col!r}"
            )
        parsed[col] = values
    features = pd.DataFrame(parsed)

    keep = features.notna().all(axis=1) & df[label_column].notna()
    n_dropped = int((~keep).sum())
    if n_dropped:
        logger.info("load_csv: dropped %d rows with missing values", n_dropped)
    features = features[keep]
    labels = df[label_column][keep]
    if len(features) == 0:
        raise ValueError("no rows left after dropping missing values")

    if positive_label not in set(labels.unique()):
        raise ValueError(
            f"positive label {positive_label!r} never occurs in column {label_column!r}"
        )
    y = (labels == positive_label).astype(np.int64).to_numpy()
    return Dataset(features.to_numpy(dtype=np.float64), y, feature_names=feature_cols)


def split_folds(dataset: Dataset, n_folds: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Deterministic 40/40/20 train/valpool/test splits, one per fold.

    Each fold draws its own permutation from a seed-derived stream, so the
    same seed reproduces identical index lists across runs and methods. The
    scaler is fitted on each fold's training rows only.
    """
    n = dataset.n
    if n < 25:
        raise ValueError(f"need at least 25 samples to split, got {n}")
    n_train = int(round(0.4 * n))
    n_pool = int(round(0.4 * n))
    splits = []
    for fold in range(n_folds):
        rng = np.random.default_rng(np.random.SeedSequence([seed, fold]))
        perm = rng.permutation(n)
        train_idx = np.sort(perm[:n_train])
        valpool_idx = np.sort(perm[n_train : n_train + n_pool])
        test_idx = np.sort(perm[n_train + n_pool :])
        scaler = Scaler.fit(dataset.X[train_idx])
        splits.append(FoldSplit(fold, train_idx, valpool_idx, test_idx, scaler))
    return splits


def bootstrap_sample(idx_list: np.ndarray, seed: int) -> np.ndarray:
    """Sample with replacement, same length as the input."""
    idx = np.asarray(idx_list)
    if idx.size == 0:
        raise ValueError("cannot bootstrap an empty index list")
    rng = np.random.default_rng(seed)
    return rng.choice(idx, size=idx.size, replace=True)
