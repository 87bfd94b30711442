"""From-scratch learners: CART trees, random forests, and a DE tuner."""
from ._kernels import BACKEND
from .de import Bound, DEResult, de_tune
from .forest import (
    ForestModel,
    ForestParams,
    RegressorModel,
    fit_forest,
    fit_regressor,
    model_from_dict,
)
from .tree import GINI_CLASSIFY, VARIANCE_REGRESS, DecisionTree, TreeParams, fit_tree

__all__ = [
    "BACKEND", "Bound", "DEResult", "de_tune", "ForestModel", "ForestParams",
    "RegressorModel", "fit_forest", "fit_regressor", "model_from_dict",
    "GINI_CLASSIFY", "VARIANCE_REGRESS", "DecisionTree", "TreeParams", "fit_tree",
]
