"""Random forest of binned Gini trees (bootstrap + per-node feature subsets)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..gbdt import _kernels
from ..gbdt.binning import BinMapper
from ..gbdt.tree import Tree, TreeBuilder


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    max_features: int | None = None  # None -> floor(sqrt(n_cols))
    bootstrap: bool = True
    min_samples_leaf: int = 1
    n_bins: int = 255
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


def _grow_gini(codes, y, mapper, rows, max_depth, max_features, min_leaf, rng) -> Tree:
    n_features = codes.shape[1]
    B = mapper.n_bins
    n_bounds = mapper.n_boundaries
    builder = TreeBuilder()
    root = builder.add_leaf()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = idx.size
        pos = float(y[idx].sum())
        builder.value[node] = 1.0 if 2 * pos > n else 0.0
        if depth >= max_depth or pos == 0 or pos == n or n < 2 * min_leaf:
            continue
        if max_features < n_features:
            feats = np.sort(rng.choice(n_features, max_features, replace=False))
        else:
            feats = np.arange(n_features)
        sub = codes[np.ix_(idx, feats)].astype(np.intp) + np.arange(feats.size) * B
        flat = sub.ravel()
        hp = np.bincount(flat, weights=np.repeat(y[idx], feats.size), minlength=feats.size * B)
        hc = np.bincount(flat, minlength=feats.size * B)
        PL = np.cumsum(hp.reshape(-1, B), axis=1)[:, :-1]
        NL = np.cumsum(hc.reshape(-1, B), axis=1)[:, :-1].astype(float)
        PR, NR = pos - PL, n - NL
        with np.errstate(divide="ignore", invalid="ignore"):
            # n * weighted Gini impurity of the children, halved
            child = PL * (NL - PL) / NL + PR * (NR - PR) / NR
        parent = pos * (n - pos) / n
        valid = (
            (np.arange(B - 1)[None, :] < n_bounds[feats][:, None])
            & (NL >= min_leaf)
            & (NR >= min_leaf)
        )
        decrease = np.where(valid, parent - child, -np.inf)
        best = int(np.argmax(decrease))
        if not np.isfinite(decrease.flat[best]):
            continue
        k, s = divmod(best, B - 1)
        f = int(feats[k])
        go_left = codes[idx, f] <= s
        lnode, rnode = builder.add_leaf(), builder.add_leaf()
        builder.split(node, f, float(mapper.boundaries[f][s]), 2.0 * float(decrease.flat[best]) / n, lnode, rnode)
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return builder.build()


def gini_tree_fit(X, y, max_depth=12, max_features=None, min_samples_leaf=1, n_bins=255, seed=0) -> Tree:
    """A single CART-style classification tree on binned features."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mapper = BinMapper(n_bins).fit(X)
    mf = X.shape[1] if max_features is None else max_features
    rng = np.random.default_rng(seed)
    return _grow_gini(mapper.transform(X), y, mapper, np.arange(len(y)), max_depth, mf, min_samples_leaf, rng)


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    n_features: int

    @cached_property
    def _flat(self):
        return _kernels.flatten(self.trees)

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} columns, got shape {X.shape}")
        return _kernels.run(X, self._flat, 0.0)

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X) / len(self.trees)

    def predict(self, X) -> np.ndarray:
        # majority vote, ties go to class 0
        return (2 * self.votes(X) > len(self.trees)).astype(np.int8)


def rf_fit(X, y, params: ForestParams = ForestParams(), threads: int = 1) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, n_features = X.shape
    mapper = BinMapper(params.n_bins).fit(X)
    codes = mapper.transform(X)
    mf = params.max_features or max(1, int(math.isqrt(n_features)))

    def one(t):
        rng = np.random.default_rng(params.seed + t)
        rows = rng.integers(n, size=n) if params.bootstrap else np.arange(n)
        return _grow_gini(codes, y, mapper, rows, params.max_depth, mf, params.min_samples_leaf, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one, range(params.n_trees)))
    else:
        trees = [one(t) for t in range(params.n_trees)]
    return ForestModel(trees, params, n_features)


def rf_predict(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)
