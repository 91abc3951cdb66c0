"""Equal-frequency feature binning with float32-exact bin boundaries."""
from __future__ import annotations

import numpy as np


def _feature_boundaries(x: np.ndarray, n_bins: int) -> np.ndarray:
    u, counts = np.unique(x, return_counts=True)
    if u.size < 2:
        return np.empty(0)
    mids = (u[:-1] + u[1:]) / 2.0
    if u.size > n_bins:
        cum = np.cumsum(counts) / x.size
        targets = np.arange(1, n_bins) / n_bins
        pos = np.unique(np.searchsorted(cum, targets, side="left"))
        mids = mids[pos[pos < mids.size]]
    # boundaries must survive the f32 cast used by the compact model format
    return np.unique(mids.astype(np.float32).astype(np.float64))


class BinMapper:
    """Maps each feature to at most ``n_bins`` bins.

    A value ``x`` lands in bin ``c`` where ``c`` is the number of
    boundaries strictly below ``x``; hence ``x <= boundaries[s]`` iff its
    bin is ``<= s``, which is exactly the test used at prediction time.
    """

    def __init__(self, n_bins: int = 255):
        if not 2 <= n_bins <= 255:
            raise ValueError(f"n_bins must lie in [2, 255], got {n_bins}")
        self.n_bins = n_bins
        self.boundaries: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "BinMapper":
        self.boundaries = [_feature_boundaries(X[:, j], self.n_bins) for j in range(X.shape[1])]
        return self

    @property
    def n_boundaries(self) -> np.ndarray:
        return np.array([b.size for b in self.boundaries], dtype=np.intp)

    def transform(self, X: np.ndarray) -> np.ndarray:
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, b in enumerate(self.boundaries):
            codes[:, j] = np.searchsorted(b, X[:, j], side="left")
        return codes
