import numpy as np
import pytest
from oracles import random_split_problem, root_split_agrees

from crfid.ml.trees import (
    LEAF, GradientBoosting, RandomForest, RegressionTree, best_split, fit_decision_tree, fit_gbt,
    fit_random_forest,
)


@pytest.mark.parametrize("case", range(200))
def test_root_split_matches_brute_force(case):
    X, y = random_split_problem(case)
    assert root_split_agrees(best_split(X, y), X, y)


def test_tie_goes_to_lowest_feature():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert best_split(X, np.array([0.0, 1.0]))[:2] == (0, 0.5)


def test_separable_pair_gives_pure_leaves():
    X = np.array([[0.0], [1.0]])
    y = np.array([3.0, 7.0])
    tree = fit_decision_tree(X, y)
    assert tree.n_nodes == 3
    assert tree.threshold[0] == 0.5
    np.testing.assert_array_equal(tree.predict(X), y)


def test_constant_target_is_single_leaf():
    X = np.random.default_rng(0).normal(size=(30, 3))
    tree = fit_decision_tree(X, np.full(30, 2.5))
    assert tree.n_nodes == 1 and tree.feature[0] == LEAF
    np.testing.assert_array_equal(tree.predict(X), 2.5)


def test_full_tree_interpolates_distinct_rows():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    np.testing.assert_allclose(fit_decision_tree(X, y).predict(X), y, atol=1e-12)


def test_max_depth_limits_tree():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(80, 2)), rng.normal(size=80)
    tree = fit_decision_tree(X, y, max_depth=2)
    assert tree.n_nodes <= 7


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        fit_decision_tree(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        fit_decision_tree(np.array([[np.nan]]), np.zeros(1))


def test_forest_of_one_unbagged_full_tree_equals_tree():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(60, 4)), rng.normal(size=60)
    rf = fit_random_forest(X, y, n_estimators=1, bootstrap=False, max_features=None)
    Xq = rng.normal(size=(40, 4))
    np.testing.assert_array_equal(rf.predict(Xq), fit_decision_tree(X, y).predict(Xq))


def test_forest_is_deterministic_per_seed():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(60, 6)), rng.normal(size=60)
    a = fit_random_forest(X, y, n_estimators=5, seed=9).predict(X)
    b = fit_random_forest(X, y, n_estimators=5, seed=9).predict(X)
    c = fit_random_forest(X, y, n_estimators=5, seed=10).predict(X)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gbt_zero_learning_rate_predicts_mean():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(40, 2)), rng.normal(size=40)
    np.testing.assert_allclose(fit_gbt(X, y, n_estimators=10, learning_rate=0.0).predict(X), y.mean())


def test_gbt_single_unit_step_stump_fits_step():
    X = np.arange(10.0)[:, None]
    y = np.where(X[:, 0] < 5, 1.0, 4.0)
    model = fit_gbt(X, y, n_estimators=1, learning_rate=1.0, max_depth=1)
    np.testing.assert_allclose(model.predict(X), y, atol=1e-12)


def test_gbt_training_rmse_never_increases():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 3))
    y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=100)
    model = fit_gbt(X, y, n_estimators=100, learning_rate=0.1, max_depth=2)
    errs = [np.sqrt(np.mean((p - y) ** 2)) for p in model.staged_predict(X)]
    assert len(errs) == 101
    assert np.all(np.diff(errs) <= 1e-12)


@pytest.mark.parametrize("make", [
    lambda X, y: fit_decision_tree(X, y, max_depth=4),
    lambda X, y: fit_random_forest(X, y, n_estimators=3, seed=1),
    lambda X, y: fit_gbt(X, y, n_estimators=5),
])
def test_state_round_trip(make):
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    model = make(X, y)
    meta, arrays = model.to_state()
    cls = {"dt": RegressionTree, "rf": RandomForest, "gbt": GradientBoosting}[model.kind]
    np.testing.assert_array_equal(cls.from_state(meta, arrays).predict(X), model.predict(X))


def test_importances_sum_to_one():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(80, 3))
    y = 3 * X[:, 1] + 0.01 * rng.normal(size=80)
    imp = fit_decision_tree(X, y, max_depth=3).feature_importances()
    assert imp.sum() == pytest.approx(1.0)
    assert np.argmax(imp) == 1
