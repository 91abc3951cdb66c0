"""Compact little-endian binary format (``.rds1``) for boosted ensembles.

Layout::

    "RDS1"  u16 version  f32 base_score
    u16 n_retained  n_retained x u16 original column index
    u16 n_trees
    per tree: u32 n_nodes, then n_nodes x {u16 feature, f32 value, i32 left, i32 right}

A feature of 0xFFFF marks a leaf, whose f32 slot is the leaf value and whose
children are -1. Internal nodes store the split threshold. Nodes are in
pre-order, so every child index is greater than its parent's.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .gbdt import GbdtParams, GradientBoostedEnsemble, Tree

MAGIC = b"RDS1"
VERSION = 1
LEAF_FEATURE = 0xFFFF
MAX_FEATURE = 0xFFFE
_NODE = np.dtype([("feature", "<u2"), ("value", "<f4"), ("left", "<i4"), ("right", "<i4")])
assert _NODE.itemsize == 14


class DecodeError(ValueError):
    """Malformed blob; ``offset`` is the byte position where decoding failed."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class BlobInfo:
    version: int
    base_score: float
    retained: tuple[int, ...]
    n_trees: int
    n_nodes: int
    size: int


def _retained(model: GradientBoostedEnsemble, selection) -> tuple[int, ...]:
    if model.feature_map is not None:
        fmap = tuple(int(i) for i in model.feature_map)
        if selection is not None and tuple(selection.retained) != fmap:
            raise ValueError("selection does not match the model's column mapping")
        return fmap
    if selection is not None:
        if len(selection.retained) != model.n_features:
            raise ValueError(
                f"selection keeps {len(selection.retained)} columns but the model was fit on {model.n_features}"
            )
        return tuple(int(i) for i in selection.retained)
    return tuple(range(model.n_features))


def export_compact(model: GradientBoostedEnsemble, selection=None) -> bytes:
    """Encode ``model``; ``selection`` supplies the retained original columns
    when the model was fit on a projected matrix without recording the map."""
    retained = _retained(model, selection)
    if retained and max(retained) > MAX_FEATURE:
        raise ValueError(f"feature index {max(retained)} exceeds the format limit of {MAX_FEATURE}")
    if len(retained) > 0xFFFF or len(model.trees) > 0xFFFF:
        raise ValueError("too many features or trees for the format")
    parts = [
        MAGIC,
        struct.pack("<Hf", VERSION, model.base_score),
        struct.pack("<H", len(retained)),
        np.asarray(retained, dtype="<u2").tobytes(),
        struct.pack("<H", len(model.trees)),
    ]
    for t in model.trees:
        if t.n_nodes > 0 and int(t.feature.max()) >= len(retained):
            raise ValueError("tree reads a column outside the retained set")
        rec = np.empty(t.n_nodes, dtype=_NODE)
        leaf = t.feature < 0
        rec["feature"] = np.where(leaf, LEAF_FEATURE, t.feature)
        rec["value"] = np.where(leaf, t.value, t.threshold)
        rec["left"] = np.where(leaf, -1, t.left)
        rec["right"] = np.where(leaf, -1, t.right)
        parts.append(struct.pack("<I", t.n_nodes))
        parts.append(rec.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = memoryview(blob)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.blob):
            raise DecodeError(f"truncated blob while reading {what}: need {n} bytes, {len(self.blob) - self.pos} left", self.pos)
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _decode_tree(rec: np.ndarray, n_retained: int, start: int, t: int) -> Tree:
    n = rec.size
    if n == 0:
        raise DecodeError(f"tree {t} has no nodes", start)
    feat = rec["feature"].astype(np.int64)
    leaf = feat == LEAF_FEATURE
    left = rec["left"].astype(np.int64)
    right = rec["right"].astype(np.int64)
    own = np.arange(n)
    bad_leaf = leaf & ((left != -1) | (right != -1))
    bad_child = ~leaf & ((left <= own) | (right <= own) | (left >= n) | (right >= n))
    bad_feat = ~leaf & (feat >= n_retained)
    for mask, what in ((bad_leaf, "leaf with children"), (bad_child, "child index out of range"), (bad_feat, "feature index out of range")):
        if mask.any():
            j = int(np.argmax(mask))
            raise DecodeError(f"tree {t} node {j}: {what}", start + j * _NODE.itemsize)
    value = rec["value"].astype(np.float64)
    return Tree(
        feature=np.where(leaf, -1, feat),
        threshold=np.where(leaf, 0.0, value),
        left=left,
        right=right,
        value=np.where(leaf, value, 0.0),
        gain=np.zeros(n),
    )


def _decode(blob: bytes):
    r = _Reader(bytes(blob))
    magic = bytes(r.take(4, "magic"))
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}, expected {MAGIC.decode()!r}", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}, expected {VERSION}", 4)
    (base,) = r.unpack("<f", "base_score")
    (n_ret,) = r.unpack("<H", "retained count")
    retained = tuple(int(i) for i in np.frombuffer(r.take(2 * n_ret, "retained indices"), dtype="<u2"))
    (n_trees,) = r.unpack("<H", "tree count")
    trees = []
    for t in range(n_trees):
        (n_nodes,) = r.unpack("<I", f"tree {t} node count")
        start = r.pos
        rec = np.frombuffer(r.take(n_nodes * _NODE.itemsize, f"tree {t} nodes"), dtype=_NODE)
        trees.append(_decode_tree(rec, n_ret, start, t))
    if r.pos != len(r.blob):
        raise DecodeError(f"{len(r.blob) - r.pos} trailing bytes after the last tree", r.pos)
    return version, float(base), retained, trees


def load_compact(blob: bytes) -> GradientBoostedEnsemble:
    """Decode a blob into a model that reads full-width rows and projects
    onto the retained columns internally."""
    _, base, retained, trees = _decode(blob)
    params = GbdtParams(
        n_estimators=max(len(trees), 1),
        max_depth=max([t.depth() for t in trees] + [1]),
        num_leaves=max([t.n_leaves for t in trees] + [2]),
    )
    return GradientBoostedEnsemble(
        trees,
        base,
        params,
        np.zeros(len(retained)),
        len(retained),
        feature_map=retained,
        n_input_features=None,
    )


def inspect_blob(blob: bytes) -> BlobInfo:
    version, base, retained, trees = _decode(blob)
    return BlobInfo(version, base, retained, len(trees), sum(t.n_nodes for t in trees), len(blob))


def save_compact(model: GradientBoostedEnsemble, path, selection=None) -> int:
    blob = export_compact(model, selection)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_compact(path) -> GradientBoostedEnsemble:
    with open(path, "rb") as fh:
        return load_compact(fh.read())
