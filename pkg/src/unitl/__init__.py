"""Transfer learning for regression via output transformation and source blending."""

from .core import (Dataset, FunctionSource, LinearSource, TransferHyperparams, TransferPredictor,
                   blend_predict, fit_transfer, transform_targets)
from .learners import ForestLearner, RidgeLearner, fit_forest, fit_ridge, smoother_weights
from .selection import GridSpec, Regime, classify_regime, cross_validate, default_grid, select_hyperparams

__version__ = "0.1.0"
