"""Evaluation of generated counterfactuals.

All metrics operate in the scaled [0, 1] feature space. Aggregates report the
mean across fold-level means and the sample stdev across folds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cfgen import CounterfactualResult
from .classifier import Classifier
from .ensemble import Ensemble, robustness

METRIC_NAMES = ("validity", "l1", "l2", "plausibility", "rob_ret", "rob_bs")


def validity(base_model: Classifier, results: list[CounterfactualResult]) -> np.ndarray:
    """Per-instance indicator that the base model predicts the target class."""
    if not results:
        raise ValueError("no results to evaluate")
    X_cf = np.stack([r.x_cf for r in results])
    targets = np.array([r.target_class for r in results])
    return (base_model.predict(X_cf) == targets).astype(np.float64)


def proximity(results: list[CounterfactualResult]) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance (L1, L2) distances between x0 and the counterfactual."""
    if not results:
        raise ValueError("no results to evaluate")
    deltas = np.stack([r.delta for r in results])
    return np.abs(deltas).sum(axis=1), np.sqrt((deltas**2).sum(axis=1))


def plausibility_knn(
    results: list[CounterfactualResult],
    X_train: np.ndarray,
    y_train: np.ndarray,
    k: int = 10,
) -> np.ndarray:
    """Mean L2 distance to the k nearest target-class training rows."""
    if not results:
        raise ValueError("no results to evaluate")
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    out = np.empty(len(results))
    for c in (0, 1):
        rows = [i for i, r in enumerate(results) if r.target_class == c]
        if not rows:
            continue
        pool = X_train[y_train == c]
        if pool.shape[0] < k:
            raise ValueError(f"only {pool.shape[0]} training rows in class {c}, need k={k}")
        X_cf = np.stack([results[i].x_cf for i in rows])
        d2 = ((X_cf[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2)
        nearest = np.sort(np.sqrt(d2), axis=1)[:, :k]
        out[rows] = nearest.mean(axis=1)
    return out


def robustness_pair(
    retrain_ens: Ensemble,
    bootstrap_ens: Ensemble,
    results: list[CounterfactualResult],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance agreement fractions for both evaluation ensembles."""
    if not results:
        raise ValueError("no results to evaluate")
    X_cf = np.stack([r.x_cf for r in results])
    targets = np.array([r.target_class for r in results])
    return robustness(retrain_ens, X_cf, targets), robustness(bootstrap_ens, X_cf, targets)


@dataclass
class MetricValue:
    mean: float
    stdev: float
    per_fold: list[float]
    per_instance: list[np.ndarray]

    @classmethod
    def from_folds(cls, per_instance: list[np.ndarray]) -> "MetricValue":
        per_fold = [float(np.mean(v)) for v in per_instance]
        stdev = float(np.std(per_fold, ddof=1)) if len(per_fold) > 1 else 0.0
        return cls(float(np.mean(per_fold)), stdev, per_fold, per_instance)


@dataclass
class MetricsReport:
    validity: MetricValue
    l1: MetricValue
    l2: MetricValue
    plausibility: MetricValue
    rob_ret: MetricValue
    rob_bs: MetricValue

    def as_dict(self) -> dict:
        return {
            name: {
                "mean": getattr(self, name).mean,
                "stdev": getattr(self, name).stdev,
                "per_fold": getattr(self, name).per_fold,
            }
            for name in METRIC_NAMES
        }


def evaluate_fold(
    base_model: Classifier,
    retrain_ens: Ensemble,
    bootstrap_ens: Ensemble,
    results: list[CounterfactualResult],
    X_train: np.ndarray,
    y_train: np.ndarray,
    k: int = 10,
) -> dict[str, np.ndarray]:
    """Per-instance values of all six metrics for one fold."""
    l1, l2 = proximity(results)
    rob_ret, rob_bs = robustness_pair(retrain_ens, bootstrap_ens, results)
    return {
        "validity": validity(base_model, results),
        "l1": l1,
        "l2": l2,
        "plausibility": plausibility_knn(results, X_train, y_train, k=k),
        "rob_ret": rob_ret,
        "rob_bs": rob_bs,
    }


def build_report(fold_values: list[dict[str, np.ndarray]]) -> MetricsReport:
    """Aggregate per-fold per-instance metric values into a report."""
    return MetricsReport(
        **{name: MetricValue.from_folds([fv[name] for fv in fold_values]) for name in METRIC_NAMES}
    )
