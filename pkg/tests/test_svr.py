import numpy as np
import pytest
from oracles import best_bias, dual_objective, grid_dual

from crfid.ml.svr import SvrModel, fit_svr, rbf_kernel


def _standardized(rng, n, p):
    X = rng.normal(size=(n, p))
    return (X - X.mean(axis=0)) / X.std(axis=0)


@pytest.mark.parametrize("seed", range(4))
def test_matches_brute_force_dual_on_five_points(seed):
    rng = np.random.default_rng(seed)
    X = _standardized(rng, 5, 2)
    y = rng.normal(size=5)
    C, eps, gamma = 1.0, 0.1, 0.5
    model = fit_svr(X, y, C, eps, gamma, tol=1e-8)
    K = rbf_kernel(X, X, gamma)
    ours = np.zeros(5)
    idx = [np.flatnonzero((X == sv).all(axis=1))[0] for sv in model.support_vectors]
    ours[idx] = model.dual_coef
    ref = grid_dual(K, y, C, eps)
    # the grid can only get within its resolution of the optimum
    assert dual_objective(ours, K, y, eps) <= dual_objective(ref, K, y, eps) + 1e-9
    np.testing.assert_allclose(ours, ref, atol=1e-3)
    b = best_bias(K @ ref, y, eps)
    Xq = rng.normal(size=(20, 2))
    ref_pred = rbf_kernel(Xq, X, gamma) @ ref + b
    assert np.max(np.abs(model.predict(Xq) - ref_pred)) <= eps + 1e-3


def test_constant_target_has_no_support_vectors():
    X = _standardized(np.random.default_rng(1), 20, 3)
    model = fit_svr(X, np.full(20, 4.2))
    assert model.dual_coef.size == 0
    assert model.bias == pytest.approx(4.2, abs=1e-3)
    np.testing.assert_allclose(model.predict(X), model.bias)


def test_wide_tube_has_no_support_vectors():
    rng = np.random.default_rng(2)
    X = _standardized(rng, 30, 2)
    y = rng.uniform(-1, 1, size=30)
    assert fit_svr(X, y, epsilon=5.0).dual_coef.size == 0


def test_rejects_unstandardized_input():
    X = np.random.default_rng(3).normal(loc=5.0, size=(10, 2))
    with pytest.raises(ValueError, match="standardized"):
        fit_svr(X, np.zeros(10))
    fit_svr(X, np.zeros(10), check_standardized=False)


@pytest.mark.parametrize("C", [0.1, 1.0, 10.0])
def test_duals_are_box_bounded_and_kkt_met(C):
    rng = np.random.default_rng(4)
    X = _standardized(rng, 60, 3)
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=60)
    model = fit_svr(X, y, C=C, epsilon=0.05)
    assert model.converged
    assert model.kkt_gap < 1e-3
    assert np.all(np.abs(model.dual_coef) <= C + 1e-12)
    assert abs(model.dual_coef.sum()) < 1e-9


def test_fits_smooth_function():
    rng = np.random.default_rng(5)
    X = _standardized(rng, 80, 1)
    y = np.sin(X[:, 0])
    model = fit_svr(X, y, C=10.0, epsilon=0.01, gamma=1.0)
    assert np.sqrt(np.mean((model.predict(X) - y) ** 2)) < 0.05


def test_state_round_trip():
    rng = np.random.default_rng(6)
    X = _standardized(rng, 25, 2)
    model = fit_svr(X, rng.normal(size=25))
    again = SvrModel.from_state(*model.to_state())
    np.testing.assert_array_equal(again.predict(X), model.predict(X))


def test_bad_hyperparameters_raise():
    X = _standardized(np.random.default_rng(7), 5, 1)
    with pytest.raises(ValueError):
        fit_svr(X, np.zeros(5), C=0.0)
    with pytest.raises(ValueError):
        fit_svr(X, np.zeros(5), epsilon=-1.0)
