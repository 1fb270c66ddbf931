"""Model collections standing in for the space of admissible retrainings.

Three kinds are built: a consensus ensemble (training signal for the flow)
and two held-out evaluation ensembles (retrain / bootstrap) used only to
score robustness. Members share the base classifier's configuration and vary
only in data sample and seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import classifier as clf
from .data import bootstrap_sample

KINDS = ("consensus", "retrain_eval", "bootstrap_eval")


class EnsembleTrainingError(RuntimeError):
    pass


class Ensemble:
    def __init__(self, kind: str, members: list[clf.Classifier], seed: int):
        if kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {kind!r}")
        if not members:
            raise ValueError("ensemble needs at least one member")
        dims = {m.d for m in members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on feature dimensionality: {dims}")
        self.kind = kind
        self.members = list(members)
        self.seed = seed

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def d(self) -> int:
        return self.members[0].d


def _train_one(args):
    k, config, X, y = args
    try:
        return clf.train(config, X, y)
    except Exception as e:  # noqa: BLE001 - re-raised with member index
        raise EnsembleTrainingError(f"member {k} failed to train: {e}") from e


def _train_members(tasks, threads: int) -> list[clf.Classifier]:
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_train_one, tasks))
    return [_train_one(t) for t in tasks]


def build_consensus_ensemble(
    X_train: np.ndarray,
    y_train: np.ndarray,
    config: clf.ClassifierConfig,
    K: int = 40,
    seed: int = 0,
    threads: int = 1,
) -> Ensemble:
    """K classifiers, member k trained on a bootstrap of the training rows."""
    if len(X_train) == 0:
        raise ValueError("empty training set")
    idx = np.arange(len(X_train))
    tasks = []
    for k in range(K):
        bs = bootstrap_sample(idx, seed + k)
        tasks.append((k, replace(config, seed=seed + k), X_train[bs], y_train[bs]))
    return Ensemble("consensus", _train_members(tasks, threads), seed)


def build_retrain_eval_ensemble(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_pool: np.ndarray,
    y_pool: np.ndarray,
    config: clf.ClassifierConfig,
    K: int = 30,
    seed: int = 0,
    threads: int = 1,
) -> Ensemble:
    """Members train on the full training set plus a bootstrap of the pool."""
    if len(X_train) == 0 or len(X_pool) == 0:
        raise ValueError("empty training set or validation pool")
    pool_idx = np.arange(len(X_pool))
    tasks = []
    for k in range(K):
        bs = bootstrap_sample(pool_idx, seed + k)
        X = np.vstack([X_train, X_pool[bs]])
        y = np.concatenate([y_train, y_pool[bs]])
        tasks.append((k, replace(config, seed=seed + k), X, y))
    return Ensemble("retrain_eval", _train_members(tasks, threads), seed)


def build_bootstrap_eval_ensemble(
    X_pool: np.ndarray,
    y_pool: np.ndarray,
    config: clf.ClassifierConfig,
    K: int = 30,
    seed: int = 0,
    threads: int = 1,
) -> Ensemble:
    """Members train on bootstraps of the validation pool alone."""
    if len(X_pool) == 0:
        raise ValueError("empty validation pool")
    pool_idx = np.arange(len(X_pool))
    tasks = []
    for k in range(K):
        bs = bootstrap_sample(pool_idx, seed + k)
        tasks.append((k, replace(config, seed=seed + k), X_pool[bs], y_pool[bs]))
    return Ensemble("bootstrap_eval", _train_members(tasks, threads), seed)


def consensus(ensemble: Ensemble, X: np.ndarray) -> np.ndarray:
    """Mean class-1 probability over members; summation in member order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.d:
        raise ValueError(f"expected (n, {ensemble.d}) input, got {X.shape}")
    total = np.zeros(X.shape[0])
    for member in ensemble.members:
        total = total + member.predict_proba(X)
    return total / ensemble.K


def robustness(ensemble: Ensemble, X_cf: np.ndarray, target_class) -> np.ndarray:
    """Per-instance fraction of members predicting the target class."""
    if ensemble.kind not in ("retrain_eval", "bootstrap_eval"):
        raise ValueError(f"robustness needs an evaluation ensemble, got {ensemble.kind!r}")
    X_cf = np.asarray(X_cf, dtype=np.float64)
    if X_cf.size == 0:
        raise ValueError("empty counterfactual batch")
    targets = np.broadcast_to(np.asarray(target_class, dtype=np.int64), (X_cf.shape[0],))
    counts = np.zeros(X_cf.shape[0])
    for member in ensemble.members:
        counts = counts + (member.predict(X_cf) == targets)
    return counts / ensemble.K
