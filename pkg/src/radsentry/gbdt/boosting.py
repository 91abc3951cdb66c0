"""Leaf-wise, histogram-based gradient boosting for binary classification."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .binning import BinMapper
from .tree import Tree, TreeBuilder

logger = logging.getLogger(__name__)

_PROB_CLIP = 1e-6


@dataclass(frozen=True)
class GbdtParams:
    n_estimators: int = 100
    max_depth: int = 8
    num_leaves: int = 31
    learning_rate: float = 0.1
    n_bins: int = 255
    min_samples_leaf: int = 20
    l2_reg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValueError("num_leaves must be >= 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 2 <= self.n_bins <= 255:
            raise ValueError("n_bins must lie in [2, 255]")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be non-negative")

    def with_(self, **kw) -> "GbdtParams":
        return replace(self, **kw)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_loss(y, raw) -> float:
    raw = np.asarray(raw, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _f32(x) -> float:
    return float(np.float32(x))


@dataclass
class GradientBoostedEnsemble:
    trees: list
    base_score: float
    params: GbdtParams
    feature_importances: np.ndarray
    n_features: int
    feature_map: tuple | None = None
    n_input_features: int | None = None
    loss_history: list = field(default_factory=list)
    debug_steps: list | None = None

    @property
    def input_width(self) -> int:
        return self.n_input_features if self.n_input_features is not None else self.n_features

    @cached_property
    def _flat(self):
        return _kernels.flatten(self.trees)

    @cached_property
    def _columns(self):
        return None if self.feature_map is None else np.asarray(self.feature_map, dtype=np.intp)

    def _check_width(self, X):
        if X.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
        if self.n_input_features is None and self.feature_map is not None:
            # loaded blob: original width unknown, only the highest used index matters
            need = max(self.feature_map) + 1 if len(self.feature_map) else 0
            if X.shape[1] < need:
                raise ValueError(f"model reads column {need - 1}, got shape {X.shape}")
        elif X.shape[1] != self.input_width:
            raise ValueError(f"model expects {self.input_width} columns, got shape {X.shape}")

    def predict_raw(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_width(X)
        cols = self._columns
        if cols is not None and not (cols.size == X.shape[1] and (cols == np.arange(cols.size)).all()):
            # gather the retained columns once; traversal then reads narrow rows
            X = X.take(cols, axis=1)
        return _kernels.run(X, self._flat, self.base_score)

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_raw(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_raw(X) >= 0.0).astype(np.int8)


@dataclass
class _Leaf:
    idx: np.ndarray
    depth: int
    grad: float
    hess: float
    gain: float = -np.inf
    feature: int = -1
    bin: int = -1
    gains: np.ndarray | None = None


class _Grower:
    def __init__(self, codes, mapper: BinMapper, params: GbdtParams, debug=False):
        self.codes = codes
        self.n_bounds = mapper.n_boundaries
        self.boundaries = mapper.boundaries
        self.params = params
        self.debug = debug
        self.n_features = codes.shape[1]
        self.B = params.n_bins
        self._offsets = np.arange(self.n_features, dtype=np.intp) * self.B

    def _evaluate(self, leaf: _Leaf, g, h):
        p = self.params
        if leaf.depth >= p.max_depth or leaf.idx.size < 2 * p.min_samples_leaf:
            return
        F, B = self.n_features, self.B
        flat = (self.codes[leaf.idx].astype(np.intp) + self._offsets).ravel()
        gi = np.repeat(g[leaf.idx], F)
        hi = np.repeat(h[leaf.idx], F)
        hg = np.bincount(flat, weights=gi, minlength=F * B).reshape(F, B)
        hh = np.bincount(flat, weights=hi, minlength=F * B).reshape(F, B)
        hc = np.bincount(flat, minlength=F * B).reshape(F, B)
        GL = np.cumsum(hg, axis=1)[:, :-1]
        HL = np.cumsum(hh, axis=1)[:, :-1]
        CL = np.cumsum(hc, axis=1)[:, :-1]
        G, H, n = leaf.grad, leaf.hess, leaf.idx.size
        GR, HR, CR = G - GL, H - HL, n - CL
        lam = p.l2_reg
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
        valid = (
            (np.arange(B - 1)[None, :] < self.n_bounds[:, None])
            & (CL >= p.min_samples_leaf)
            & (CR >= p.min_samples_leaf)
        )
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))  # first maximum: lowest feature, then lowest bin
        leaf.feature, leaf.bin = divmod(best, B - 1)
        leaf.gain = float(gain.flat[best])
        if self.debug:
            leaf.gains = gain

    def grow(self, g, h, rows):
        p = self.params
        builder = TreeBuilder()
        root = builder.add_leaf()
        leaves = {root: _Leaf(rows, 0, float(g[rows].sum()), float(h[rows].sum()))}
        self._evaluate(leaves[root], g, h)
        steps = []
        while len(leaves) < p.num_leaves:
            splittable = [(lf.gain, node) for node, lf in leaves.items() if lf.gain > 0]
            if not splittable:
                break
            gain, node = max(splittable, key=lambda c: (c[0], -c[1]))
            if self.debug:
                best_any = max(
                    (float(lf.gains.max()) for lf in leaves.values() if lf.gains is not None),
                    default=-np.inf,
                )
                steps.append((gain, best_any))
            leaf = leaves.pop(node)
            go_left = self.codes[leaf.idx, leaf.feature] <= leaf.bin
            children = []
            for part in (leaf.idx[go_left], leaf.idx[~go_left]):
                child = _Leaf(part, leaf.depth + 1, float(g[part].sum()), float(h[part].sum()))
                self._evaluate(child, g, h)
                children.append(child)
            lnode, rnode = builder.add_leaf(), builder.add_leaf()
            builder.split(
                node,
                leaf.feature,
                float(self.boundaries[leaf.feature][leaf.bin]),
                gain,
                lnode,
                rnode,
            )
            leaves[lnode], leaves[rnode] = children
        updates = []
        for node, lf in leaves.items():
            v = _f32(-lf.grad / (lf.hess + p.l2_reg) * p.learning_rate)
            builder.value[node] = v
            updates.append((lf.idx, v))
        return builder.build(), updates, steps


def gbdt_fit(X, y, params: GbdtParams = GbdtParams(), debug: bool = False) -> GradientBoostedEnsemble:
    """Fit a boosted ensemble with logistic loss.

    With ``debug=True`` every growth step records ``(chosen_gain,
    best_candidate_gain)`` over all splittable leaves in ``debug_steps``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, n_features = X.shape
    if y.shape != (n,) or not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be a binary vector matching the row count")
    pos_rate = y.mean() if n else 0.0
    if pos_rate <= 0.0 or pos_rate >= 1.0:
        warnings.warn("single-class training labels; returning a constant model", RuntimeWarning)
        p = min(max(pos_rate, _PROB_CLIP), 1 - _PROB_CLIP)
        base = _f32(np.log(p / (1 - p)))
        return GradientBoostedEnsemble([], base, params, np.zeros(n_features), n_features)
    if n < 2 * params.min_samples_leaf:
        raise ValueError(f"need at least {2 * params.min_samples_leaf} rows, got {n}")

    base = _f32(np.log(pos_rate / (1 - pos_rate)))
    mapper = BinMapper(params.n_bins).fit(X)
    codes = mapper.transform(X)
    grower = _Grower(codes, mapper, params, debug=debug)
    raw = np.full(n, base)
    rows = np.arange(n)
    trees, losses, debug_steps = [], [log_loss(y, raw)], [] if debug else None
    importances = np.zeros(n_features)
    for _ in range(params.n_estimators):
        prob = sigmoid(raw)
        g = prob - y
        h = prob * (1.0 - prob)
        tree, updates, steps = grower.grow(g, h, rows)
        for idx, v in updates:
            raw[idx] += v
        internal = tree.feature >= 0
        np.add.at(importances, tree.feature[internal], tree.gain[internal])
        trees.append(tree)
        losses.append(log_loss(y, raw))
        if debug:
            debug_steps.append(steps)
    logger.debug("boosting finished: %d trees, loss %.5f -> %.5f", len(trees), losses[0], losses[-1])
    return GradientBoostedEnsemble(
        trees, base, params, importances, n_features, loss_history=losses, debug_steps=debug_steps
    )


def gbdt_predict_raw(model: GradientBoostedEnsemble, X) -> np.ndarray:
    return model.predict_raw(X)


def gbdt_predict_proba(model: GradientBoostedEnsemble, X) -> np.ndarray:
    return model.predict_proba(X)


def gbdt_importances(model: GradientBoostedEnsemble, normalized: bool = False) -> np.ndarray:
    imp = np.asarray(model.feature_importances, dtype=np.float64).copy()
    if normalized:
        total = imp.sum()
        return imp / total if total > 0 else imp
    return imp


def truncate(model: GradientBoostedEnsemble, n_trees: int) -> GradientBoostedEnsemble:
    """Model made of the first ``n_trees`` trees (importances recomputed)."""
    trees = model.trees[:n_trees]
    imp = np.zeros(model.n_features)
    for t in trees:
        internal = t.feature >= 0
        np.add.at(imp, t.feature[internal], t.gain[internal])
    return GradientBoostedEnsemble(
        trees,
        model.base_score,
        model.params,
        imp,
        model.n_features,
        model.feature_map,
        model.n_input_features,
    )
