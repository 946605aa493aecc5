from ._backend import BACKEND
from .model import (
    GbdtConfig,
    GbdtModel,
    Loss,
    RegressionTree,
    empirical_quantile,
    find_best_split,
    fit,
    predict,
)

__all__ = [
    "BACKEND",
    "GbdtConfig",
    "GbdtModel",
    "Loss",
    "RegressionTree",
    "empirical_quantile",
    "find_best_split",
    "fit",
    "predict",
]
