"""Epsilon-insensitive support vector regression with an RBF kernel, trained by SMO.

The dual is posed over 2n variables beta = [alpha, alpha*] with labels
z = [+1]*n + [-1]*n:

    min 1/2 beta' Q beta + p' beta,   Q_st = z_s z_t K(x_s, x_t),
    p = [eps - y, eps + y],  z' beta = 0,  0 <= beta <= C

Each iteration updates the maximal-violating pair (first-order working set
selection) analytically, as in LIBSVM.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha - alpha*
    bias: float
    gamma: float
    C: float
    epsilon: float
    converged: bool = True
    n_iter: int = 0
    kkt_gap: float = 0.0

    kind = "svr"

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.dual_coef.size == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_state(self) -> tuple[dict, dict]:
        meta = dict(bias=self.bias, gamma=self.gamma, C=self.C, epsilon=self.epsilon,
                    converged=self.converged, n_iter=self.n_iter, kkt_gap=self.kkt_gap,
                    n_features=int(self.support_vectors.shape[1]))
        return meta, {"support_vectors": self.support_vectors, "dual_coef": self.dual_coef}

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> "SvrModel":
        sv = np.asarray(arrays["support_vectors"], dtype=np.float64).reshape(-1, int(meta["n_features"]))
        return cls(sv, np.asarray(arrays["dual_coef"], dtype=np.float64), float(meta["bias"]),
                   float(meta["gamma"]), float(meta["C"]), float(meta["epsilon"]),
                   bool(meta["converged"]), int(meta["n_iter"]), float(meta["kkt_gap"]))


def _bias(beta, grad, z, C):
    """LIBSVM's rho from free variables, or the midpoint of the feasible interval."""
    zg = z * grad
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if np.any(free):
        rho = zg[free].mean()
    else:
        ub_mask = (at_upper & (z < 0)) | (at_lower & (z > 0))
        lb_mask = (at_upper & (z > 0)) | (at_lower & (z < 0))
        ub = zg[ub_mask].min() if np.any(ub_mask) else np.inf
        lb = zg[lb_mask].max() if np.any(lb_mask) else -np.inf
        rho = 0.5 * (ub + lb)
    return -rho


def fit_svr(
    X,
    y,
    C: float = 1.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    check_standardized: bool = True,
) -> SvrModel:
    """Train an RBF epsilon-SVR. ``gamma=None`` means 1/n_features.

    Non-convergence within ``max_iter`` is logged as a warning and the
    partially optimised model is returned.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, p) with n > 0 and y of length n")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    if check_standardized and np.any(np.abs(X.mean(axis=0)) > 0.5):
        raise ValueError("SVR expects standardized features (some column mean exceeds 0.5 in magnitude)")
    if C <= 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    n, p = X.shape
    gamma = 1.0 / p if gamma is None else float(gamma)

    K = rbf_kernel(X, X, gamma)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    grad = np.concatenate([epsilon - y, epsilon + y])  # p + Q beta at beta = 0
    beta = np.zeros(2 * n)
    diag = np.concatenate([np.diag(K), np.diag(K)])

    def q_col(t):
        return z * z[t] * np.concatenate([K[:, t % n], K[:, t % n]])

    converged = False
    it = 0
    gap = np.inf
    while it < max_iter:
        up = ((z > 0) & (beta < C)) | ((z < 0) & (beta > 0))
        low = ((z > 0) & (beta > 0)) | ((z < 0) & (beta < C))
        score = -z * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = float(score[i] - score[j]) if (up[i] and low[j]) else 0.0
        if gap < tol:
            converged = True
            break
        it += 1
        Qi, Qj = q_col(i), q_col(j)
        old_i, old_j = beta[i], beta[j]
        if z[i] != z[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Qi[j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            bi, bj = old_i + delta, old_j + delta
            if diff > 0:
                if bj < 0:
                    bj, bi = 0.0, diff
            elif bi < 0:
                bi, bj = 0.0, -diff
            if diff > 0:
                if bi > C:
                    bi, bj = C, C - diff
            elif bj > C:
                bj, bi = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Qi[j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            bi, bj = old_i - delta, old_j + delta
            if total > C:
                if bi > C:
                    bi, bj = C, total - C
            elif bj < 0:
                bj, bi = 0.0, total
            if total > C:
                if bj > C:
                    bj, bi = C, total - C
            elif bi < 0:
                bi, bj = 0.0, total
        beta[i], beta[j] = bi, bj
        grad += Qi * (bi - old_i) + Qj * (bj - old_j)

    if not converged:
        log.warning("SVR did not converge within %d iterations", max_iter)
    coef = beta[:n] - beta[n:]
    keep = coef != 0
    return SvrModel(X[keep].copy(), coef[keep], float(_bias(beta, grad, z, C)), gamma,
                    float(C), float(epsilon), converged, it, gap)

