from .selection import (
    DEFAULT_GRIDS,
    DEFAULT_PARAMS,
    MODEL_KINDS,
    fit_model,
    grid_search_cv,
    kfold_indices,
    rfe_cv,
    rmse,
)
from .svr import SvrModel, fit_svr
from .trees import GradientBoosting, RandomForest, RegressionTree, best_split, fit_decision_tree, fit_gbt, fit_random_forest

__all__ = [
    "DEFAULT_GRIDS", "DEFAULT_PARAMS", "MODEL_KINDS", "fit_model", "grid_search_cv",
    "kfold_indices", "rfe_cv", "rmse", "SvrModel", "fit_svr", "GradientBoosting",
    "RandomForest", "RegressionTree", "best_split", "fit_decision_tree", "fit_gbt",
    "fit_random_forest",
]
