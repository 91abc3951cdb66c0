"""Compiled tree-ensemble traversal shared by every tree model.

Rows advance through each tree level by level; leaves loop onto themselves
(threshold +inf) so every row takes exactly ``depth`` steps. Each row still
accumulates ``base + tree_0 + tree_1 + ...`` in tree order.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def predict_flat(X, feature, threshold, children, value, roots, depths, base, out):
    n = X.shape[0]
    node = np.empty(n, np.int64)
    for i in range(n):
        out[i] = base
    for t in range(roots.shape[0]):
        r = roots[t]
        for i in range(n):
            node[i] = r
        for _ in range(depths[t]):
            for i in range(n):
                j = node[i]
                node[i] = children[j, np.int64(X[i, feature[j]] > threshold[j])]
        for i in range(n):
            out[i] += value[node[i]]
    return out


def flatten(trees):
    """Concatenate per-tree node arrays into one set of global arrays."""
    feats, thr, kids, val, roots, depths = [], [], [], [], [], []
    offset = 0
    for t in trees:
        leaf = t.feature < 0
        own = np.arange(t.n_nodes) + offset
        f = np.where(leaf, 0, t.feature).astype(np.int64)
        feats.append(f)
        thr.append(np.where(leaf, np.inf, t.threshold))
        kids.append(
            np.stack(
                [np.where(leaf, own, t.left + offset), np.where(leaf, own, t.right + offset)],
                axis=1,
            )
        )
        val.append(t.value)
        roots.append(offset)
        depths.append(t.depth())
        offset += t.n_nodes
    if not trees:
        return (
            np.zeros(1, np.int64),
            np.full(1, np.inf),
            np.zeros((1, 2), np.int64),
            np.zeros(1),
            np.zeros(0, np.int64),
            np.zeros(0, np.int64),
        )
    return (
        np.ascontiguousarray(np.concatenate(feats), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(thr), dtype=np.float64),
        np.ascontiguousarray(np.concatenate(kids), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(val), dtype=np.float64),
        np.asarray(roots, dtype=np.int64),
        np.asarray(depths, dtype=np.int64),
    )


def run(X, flat, base):
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    return predict_flat(X, *flat, float(base), out)
