"""CART regression trees and the two tree ensembles built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LEAF = -1


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    return X, y


def best_split(X: np.ndarray, y: np.ndarray, features=None):
    """Best variance-reduction split of (X, y) over ``features``.

    Returns ``(feature, threshold, gain)`` with gain the drop in summed squared
    error, or ``None`` if no split reduces it.  Candidate thresholds are
    midpoints between consecutive distinct sorted values.  Ties go to the
    lowest feature index, then the lowest threshold.
    """
    feats = np.arange(X.shape[1]) if features is None else np.sort(np.asarray(features))
    n = y.size
    if n < 2:
        return None
    r = y - y.mean()
    sse = float(r @ r)
    if sse <= 0.0:
        return None
    sub = X[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    rs = r[order]
    cs = np.cumsum(rs, axis=0)[:-1]
    cs2 = np.cumsum(rs * rs, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    total = cs[-1] + rs[-1]
    total2 = cs2[-1] + rs[-1] ** 2
    sse_left = cs2 - cs * cs / n_left
    sse_right = (total2 - cs2) - (total - cs) ** 2 / n_right
    gain = sse - sse_left - sse_right
    gain[xs[1:] <= xs[:-1]] = -np.inf
    # feature-major flattening makes argmax honour the tie-break order
    flat = gain.T.ravel()
    g = flat.max()
    if not g > 1e-12 * sse:
        return None
    # gains equal up to rounding count as ties
    k = int(np.argmax(flat >= g - 1e-12 * sse))
    g = flat[k]
    j, i = divmod(k, n - 1)
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return int(feats[j]), float(thr), float(g)


@dataclass
class RegressionTree:
    """Flat-array CART tree. Node 0 is the root; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_features: int

    kind = "dt"

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while np.any(active):
            idx = rows[active]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def feature_importances(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        inner = self.feature != LEAF
        np.add.at(imp, self.feature[inner], self.gain[inner])
        s = imp.sum()
        return imp / s if s > 0 else imp

    def to_state(self) -> tuple[dict, dict]:
        arrays = {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value", "gain")}
        return {"n_features": self.n_features}, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> "RegressionTree":
        return cls(n_features=int(meta["n_features"]), **{
            k: np.asarray(arrays[k], dtype=np.int64 if k in ("feature", "left", "right") else np.float64)
            for k in ("feature", "threshold", "left", "right", "value", "gain")
        })


def fit_decision_tree(
    X,
    y,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow a CART regression tree on squared error.

    ``max_features`` draws that many candidate features per split from
    ``rng`` (random-forest style); ``None`` uses all of them.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    if max_features is not None and not 1 <= max_features <= p:
        raise ValueError(f"max_features must be in [1, {p}]")
    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        gain.append(0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size < max(min_samples_split, 2) or (max_depth is not None and depth >= max_depth):
            continue
        feats = None
        if max_features is not None and max_features < p:
            feats = rng.choice(p, size=max_features, replace=False)
        split = best_split(X[idx], y[idx], feats)
        if split is None:
            continue
        j, thr, g = split
        mask = X[idx, j] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node], gain[node] = j, thr, g
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(gain), p,
    )


def tree_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, index])


def _pack_trees(trees: list[RegressionTree]) -> tuple[list, dict]:
    metas, arrays = [], {}
    for k, t in enumerate(trees):
        meta, arr = t.to_state()
        metas.append(meta)
        arrays.update({f"t{k}.{name}": a for name, a in arr.items()})
    return metas, arrays


def _unpack_trees(metas: list, arrays: dict) -> list[RegressionTree]:
    return [RegressionTree.from_state(m, {name.split(".", 1)[1]: a for name, a in arrays.items()
                                          if name.startswith(f"t{k}.")})
            for k, m in enumerate(metas)]


@dataclass
class RandomForest:
    trees: list[RegressionTree] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    kind = "rf"

    def predict(self, X) -> np.ndarray:
        out = np.zeros(np.asarray(X).shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)

    def feature_importances(self) -> np.ndarray:
        return np.mean([t.feature_importances() for t in self.trees], axis=0)

    def to_state(self) -> tuple[dict, dict]:
        metas, arrays = _pack_trees(self.trees)
        return {"params": self.params, "trees": metas}, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> "RandomForest":
        return cls(_unpack_trees(meta["trees"], arrays), dict(meta["params"]))


def fit_random_forest(
    X,
    y,
    n_estimators: int = 100,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    max_features: int | str | None = "third",
    bootstrap: bool = True,
    seed: int = 0,
) -> RandomForest:
    """Bagged CART trees; each tree gets its own generator seeded by (seed, tree index).

    ``max_features="third"`` means ceil(p/3) candidates per split.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    if max_features == "third":
        max_features = math.ceil(p / 3)
    trees = []
    for k in range(n_estimators):
        rng = np.random.default_rng(tree_seed(seed, k))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(fit_decision_tree(X[idx], y[idx], max_depth, min_samples_split, max_features, rng))
    params = dict(n_estimators=n_estimators, max_depth=max_depth, min_samples_split=min_samples_split,
                  max_features=max_features, bootstrap=bootstrap, seed=seed)
    return RandomForest(trees, params)


@dataclass
class GradientBoosting:
    init: float
    learning_rate: float
    trees: list[RegressionTree] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    kind = "gbt"

    def staged_predict(self, X):
        out = np.full(np.asarray(X).shape[0], self.init)
        yield out.copy()
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
            yield out.copy()

    def predict(self, X) -> np.ndarray:
        out = np.full(np.asarray(X).shape[0], self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def feature_importances(self) -> np.ndarray:
        if not self.trees:
            return np.zeros(0)
        return np.mean([t.feature_importances() for t in self.trees], axis=0)

    def to_state(self) -> tuple[dict, dict]:
        metas, arrays = _pack_trees(self.trees)
        meta = {"init": self.init, "learning_rate": self.learning_rate, "params": self.params, "trees": metas}
        return meta, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> "GradientBoosting":
        return cls(float(meta["init"]), float(meta["learning_rate"]),
                   _unpack_trees(meta["trees"], arrays), dict(meta["params"]))


def fit_gbt(
    X,
    y,
    n_estimators: int = 100,
    learning_rate: float = 0.1,
    max_depth: int | None = 3,
    min_samples_split: int = 2,
) -> GradientBoosting:
    """Squared-loss gradient boosting: each tree fits the current residuals."""
    X, y = _check_xy(X, y)
    model = GradientBoosting(float(y.mean()), float(learning_rate), [],
                             dict(n_estimators=n_estimators, learning_rate=learning_rate,
                                  max_depth=max_depth, min_samples_split=min_samples_split))
    pred = np.full(y.size, model.init)
    if learning_rate == 0:
        return model
    for _ in range(n_estimators):
        tree = fit_decision_tree(X, y - pred, max_depth, min_samples_split)
        model.trees.append(tree)
        pred += learning_rate * tree.predict(X)
    return model
