"""Array-backed binary tree shared by the boosted and forest models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class Tree:
    """Nodes in pre-order; ``feature == -1`` marks a leaf.

    Internal nodes route ``x[feature] <= threshold`` to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] == LEAF:
                best = max(best, d)
            else:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best

    def apply_one(self, x) -> int:
        """Leaf index reached by a single row (slow reference path)."""
        node = 0
        while self.feature[node] != LEAF:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(node)


class TreeBuilder:
    """Collects nodes in creation order and emits a pre-ordered :class:`Tree`."""

    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.gain = [], []

    def add_leaf(self, value=0.0) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, gain, left, right):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = left
        self.right[node] = right
        self.value[node] = 0.0

    def build(self) -> Tree:
        order = []
        stack = [0]
        while stack:
            node = stack.pop()
            order.append(node)
            if self.feature[node] != LEAF:
                stack.append(self.right[node])
                stack.append(self.left[node])
        new_index = {old: new for new, old in enumerate(order)}

        def remap(ix):
            return new_index[ix] if ix >= 0 else -1

        return Tree(
            feature=np.array([self.feature[o] for o in order], dtype=np.int64),
            threshold=np.array([self.threshold[o] for o in order], dtype=np.float64),
            left=np.array([remap(self.left[o]) for o in order], dtype=np.int64),
            right=np.array([remap(self.right[o]) for o in order], dtype=np.int64),
            value=np.array([self.value[o] for o in order], dtype=np.float64),
            gain=np.array([self.gain[o] for o in order], dtype=np.float64),
        )
