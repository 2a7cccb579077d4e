"""Class-level predictive uncertainty as a class-imbalance measure.

A small numpy laboratory: synthetic long-tailed and semantically imbalanced
datasets, an MLP classifier with exact gradients, cardinality- and
uncertainty-driven resampling, reweighting and margin losses, deep-ensemble
uncertainty, and the analyses comparing the two measures.
"""

from classunc.datasets import Dataset, LongTailSpec, SemanticSpec
from classunc.ensemble import EnsemblePredictions, UncertaintyReport
from classunc.losses import ClassWeights, LossSpec, MarginSpec
from classunc.measures import ImbalanceMeasure, Rho
from classunc.nn import MlpModel, SgdState
from classunc.trainer import MitigationSpec, RunResult, StageSpec, TrainConfig

__all__ = [
    "ClassWeights",
    "Dataset",
    "EnsemblePredictions",
    "ImbalanceMeasure",
    "LongTailSpec",
    "LossSpec",
    "MarginSpec",
    "MitigationSpec",
    "MlpModel",
    "Rho",
    "RunResult",
    "SemanticSpec",
    "SgdState",
    "StageSpec",
    "TrainConfig",
    "UncertaintyReport",
]

__version__ = "0.1.0"
