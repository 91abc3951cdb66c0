"""Soft-margin SVM: Pegasos for the linear kernel, SMO for RBF."""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

RBF_MAX_ROWS = 20_000
_TAU = 1e-12


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | None = None  # None -> 1 / (n_features * X.var())
    epochs: int = 1000
    batch_size: int | None = None
    tol: float = 1e-3
    max_iter: int = 200_000
    cache_mb: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass
class SvmModel:
    kernel: str
    n_features: int
    weights: np.ndarray | None = None
    intercept: float = 0.0
    support_vectors: np.ndarray | None = None
    dual_coef: np.ndarray | None = None
    gamma: float = 0.0
    n_iter: int = 0

    @property
    def n_support(self) -> int:
        return 0 if self.support_vectors is None else len(self.support_vectors)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} columns, got shape {X.shape}")
        if self.kernel == "linear":
            return X @ self.weights + self.intercept
        out = np.empty(len(X))
        sv_sq = np.einsum("ij,ij->i", self.support_vectors, self.support_vectors)
        for start in range(0, len(X), 1024):
            chunk = X[start : start + 1024]
            d2 = np.einsum("ij,ij->i", chunk, chunk)[:, None] + sv_sq[None, :] - 2.0 * chunk @ self.support_vectors.T
            out[start : start + 1024] = np.exp(-self.gamma * np.maximum(d2, 0.0)) @ self.dual_coef
        return out + self.intercept

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int8)


# -- linear: Pegasos -----------------------------------------------------------


def hinge_objective(w, X, y, lam) -> float:
    """lam/2 |w|^2 + mean hinge loss; ``y`` in {-1, +1}, bias folded into ``w``."""
    margins = y * (X @ w)
    return float(0.5 * lam * (w @ w) + np.maximum(0.0, 1.0 - margins).mean())


def hinge_subgradient(w, X, y, lam) -> np.ndarray:
    viol = y * (X @ w) < 1.0
    return lam * w - (y[viol, None] * X[viol]).sum(axis=0) / len(y)


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _fit_linear(X, ypm, params: SvmParams) -> SvmModel:
    Xa = _augment(X)
    n = len(ypm)
    lam = 1.0 / (params.C * n)
    rng = np.random.default_rng(params.seed)
    w = np.zeros(Xa.shape[1])
    radius = 1.0 / np.sqrt(lam)
    batch = params.batch_size
    for t in range(1, params.epochs + 1):
        if batch is None or batch >= n:
            grad = hinge_subgradient(w, Xa, ypm, lam)
        else:
            idx = rng.choice(n, batch, replace=False)
            grad = hinge_subgradient(w, Xa[idx], ypm[idx], lam)
        w = w - grad / (lam * t)
        norm = np.sqrt(w @ w)
        if norm > radius:
            w *= radius / norm
    return SvmModel("linear", X.shape[1], weights=w[:-1].copy(), intercept=float(w[-1]), n_iter=params.epochs)


# -- RBF: SMO with second-order working-set selection ----------------------------


class _KernelColumns:
    def __init__(self, X, gamma, cache_mb):
        self.X = X
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", X, X)
        self.cache = OrderedDict()
        self.capacity = max(2, int(cache_mb * 2**20 / (8 * len(X))))

    def __call__(self, i):
        col = self.cache.get(i)
        if col is not None:
            self.cache.move_to_end(i)
            return col
        d2 = self.sq + self.sq[i] - 2.0 * (self.X @ self.X[i])
        col = np.exp(-self.gamma * np.maximum(d2, 0.0))
        self.cache[i] = col
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return col


def _fit_rbf(X, ypm, params: SvmParams, gamma: float) -> SvmModel:
    n = len(ypm)
    if n > RBF_MAX_ROWS:
        raise ValueError(
            f"rbf SVM on {n} rows exceeds the {RBF_MAX_ROWS}-row limit; use kernel='linear'"
        )
    C = params.C
    K = _KernelColumns(X, gamma, params.cache_mb)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    pos = ypm > 0
    it = 0
    while it < params.max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -ypm * grad
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        g_max = s_up[i]
        g_min = np.min(np.where(low, score, np.inf))
        if g_max - g_min < params.tol:
            break
        Ki = K(i)
        b = g_max - score
        cand = low & (b > 0)
        if not cand.any():
            break
        a = np.maximum(2.0 - 2.0 * Ki, _TAU)  # K_ii = K_jj = 1 for RBF
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        Kj = K(j)
        yi, yj = ypm[i], ypm[j]
        quad = max(2.0 - 2.0 * Ki[j], _TAU)
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += ypm * (yi * Ki * (ai - ai_old) + yj * Kj * (aj - aj_old))
        it += 1
    else:
        logger.warning("SMO stopped at max_iter=%d before reaching tol", params.max_iter)

    yg = ypm * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub = np.where((pos & (alpha <= 0)) | (~pos & (alpha >= C)), yg, np.inf).min()
        lb = np.where((pos & (alpha >= C)) | (~pos & (alpha <= 0)), yg, -np.inf).max()
        rho = float((ub + lb) / 2)
    sv = alpha > 0
    return SvmModel(
        "rbf",
        X.shape[1],
        intercept=-rho,
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * ypm)[sv],
        gamma=gamma,
        n_iter=it,
    )


def svm_fit(X, y, params: SvmParams = SvmParams()) -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    ypm = np.where(np.asarray(y) > 0, 1.0, -1.0)
    if params.kernel == "linear":
        return _fit_linear(X, ypm, params)
    gamma = params.gamma
    if gamma is None:
        var = X.var()
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    return _fit_rbf(X, ypm, params, float(gamma))


def svm_predict(model: SvmModel, X) -> np.ndarray:
    return model.predict(X)
