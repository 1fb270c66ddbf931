"""Consensus-robust counterfactual explanations with conditional normalizing flows."""

from .cfgen import (
    BaselineConfig,
    CounterfactualResult,
    CroceConfig,
    generate_baseline,
    generate_croce,
    generate_croce_batch,
    select_explanation_targets,
)
from .classifier import Classifier, ClassifierConfig
from .data import Dataset, FoldSplit, bootstrap_sample, load_csv, make_moons, split_folds
from .ensemble import Ensemble, consensus, robustness
from .flow import ConditionalFlow, FlowConfig, threshold_tau
from .harness import ExperimentConfig, run_inference, run_offline, run_sweep

__all__ = [
    "BaselineConfig",
    "Classifier",
    "ClassifierConfig",
    "ConditionalFlow",
    "CounterfactualResult",
    "CroceConfig",
    "Dataset",
    "Ensemble",
    "ExperimentConfig",
    "FlowConfig",
    "FoldSplit",
    "bootstrap_sample",
    "consensus",
    "generate_baseline",
    "generate_croce",
    "generate_croce_batch",
    "load_csv",
    "make_moons",
    "robustness",
    "run_inference",
    "run_offline",
    "run_sweep",
    "select_explanation_targets",
    "split_folds",
    "threshold_tau",
]

__version__ = "0.1.0"
