"""Model dispatch, k-fold CV, recursive feature elimination and grid search."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .svr import fit_svr
from .trees import fit_decision_tree, fit_gbt, fit_random_forest

MODEL_KINDS = ("dt", "rf", "gbt", "svr")

DEFAULT_PARAMS = {
    "dt": {"max_depth": 10, "min_samples_split": 2},
    "rf": {"n_estimators": 100, "max_depth": 10, "min_samples_split": 2},
    "gbt": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 5, "min_samples_split": 2},
    "svr": {"C": 10.0, "epsilon": 0.1, "gamma": "1/p"},
}

DEFAULT_GRIDS = {
    "dt": {"max_depth": [5, 10, 20], "min_samples_split": [2, 10]},
    "rf": {"max_depth": [5, 10, 20], "n_estimators": [100, 300], "min_samples_split": [2, 10]},
    "gbt": {
        "max_depth": [5, 10, 20], "n_estimators": [100, 300],
        "learning_rate": [0.05, 0.1], "min_samples_split": [2, 10],
    },
    "svr": {"C": [1.0, 10.0, 100.0], "epsilon": [0.01, 0.1], "gamma": ["1/p", 0.1]},
}


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.size == 0:
        raise ValueError("rmse needs equal-length non-empty inputs")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def fit_model(kind: str, X, y, params: dict | None = None, seed: int = 0):
    """Fit one regressor of ``kind`` with ``params`` merged over the defaults."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    p = {**DEFAULT_PARAMS[kind], **(params or {})}
    if kind == "dt":
        return fit_decision_tree(X, y, p["max_depth"], p["min_samples_split"])
    if kind == "rf":
        return fit_random_forest(X, y, p["n_estimators"], p["max_depth"], p["min_samples_split"],
                                 p.get("max_features", "third"), p.get("bootstrap", True),
                                 seed=p.get("seed", seed))
    if kind == "gbt":
        return fit_gbt(X, y, p["n_estimators"], p["learning_rate"], p["max_depth"], p["min_samples_split"])
    gamma = p["gamma"]
    if gamma == "1/p":
        gamma = None
    return fit_svr(X, y, p["C"], p["epsilon"], gamma, max_iter=p.get("max_iter", 100_000))


def kfold_indices(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, held-out) index pairs for a seeded shuffled k-fold split."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, k)
    return [(np.sort(np.concatenate(parts[:i] + parts[i + 1:])), np.sort(parts[i])) for i in range(k)]


def cv_scores(kind, X, y, params, folds, seed: int = 0) -> list[float]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = []
    for tr, te in folds:
        model = fit_model(kind, X[tr], y[tr], params, seed)
        out.append(rmse(model.predict(X[te]), y[te]))
    return out


def permutation_importance(model, X, y, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rmse(model.predict(X), y)
    imp = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        Xp = X.copy()
        Xp[:, j] = Xp[rng.permutation(X.shape[0]), j]
        imp[j] = rmse(model.predict(Xp), y) - base
    return imp


def _importances(kind, X, y, params, folds, seed):
    if kind == "svr":
        tr, te = folds[0]
        model = fit_model(kind, X[tr], y[tr], params, seed)
        return permutation_importance(model, X[te], y[te], seed)
    return fit_model(kind, X, y, params, seed).feature_importances()


def rfe_cv(kind: str, X, y, params: dict | None = None, cv_folds: int = 3, seed: int = 0,
           step: float = 0.1):
    """Recursive feature elimination scored by k-fold CV RMSE.

    Each round drops the ``step`` fraction (at least one) of surviving
    features with the lowest importance.  Returns ``(mask, history)`` where
    the mask minimises mean CV RMSE (ties go to fewer features) and history
    lists ``(n_features, mean_rmse)`` per round.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = X.shape[1]
    if p < 1:
        raise ValueError("need at least one feature")
    if p == 1:
        return np.ones(1, dtype=bool), [(1, float("nan"))]
    folds = kfold_indices(X.shape[0], cv_folds, seed)
    current = np.arange(p)
    history = []
    best_mask, best_score = None, np.inf
    while True:
        score = float(np.mean(cv_scores(kind, X[:, current], y, params, folds, seed)))
        history.append((current.size, score))
        # later rounds have fewer features, so ``<=`` hands ties to them
        if score <= best_score * (1 + 1e-12) + 1e-15:
            best_score = min(score, best_score)
            best_mask = np.zeros(p, dtype=bool)
            best_mask[current] = True
        if current.size == 1:
            break
        imp = _importances(kind, X[:, current], y, params, folds, seed)
        n_drop = max(1, math.floor(step * current.size))
        # lowest importance first; among equals drop the higher index
        order = np.lexsort((-current, imp))
        current = np.sort(np.delete(current, order[:n_drop]))
    return best_mask, history


def expand_grid(grid: dict) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be non-empty")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def grid_search_cv(kind: str, X, y, grid: dict, cv_folds: int = 3, seed: int = 0):
    """Exhaustive grid search with one shared seeded fold assignment.

    Returns ``(best_params, table)``; the table has one dict per config with
    per-fold and mean RMSE. Ties keep the first config in grid order.
    """
    configs = expand_grid(grid)
    X = np.asarray(X, dtype=np.float64)
    folds = kfold_indices(X.shape[0], cv_folds, seed)
    table = []
    best, best_score = None, np.inf
    for cfg in configs:
        scores = cv_scores(kind, X, y, cfg, folds, seed)
        mean = float(np.mean(scores))
        table.append({**cfg, **{f"fold{i}_rmse": s for i, s in enumerate(scores)}, "mean_rmse": mean})
        if mean < best_score:
            best, best_score = cfg, mean
    return best, table
