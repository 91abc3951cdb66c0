"""K-Means anomaly discovery, anomaly labeling and SMOTE attack synthesis."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .preprocess import FeatureMatrix, NoiseConfig, inject_noise

logger = logging.getLogger(__name__)

ORIGINAL = "original"
SYNTHETIC = "synthetic"

_CHUNK = 2048


class ClusteringError(ValueError):
    pass


# -- K-Means ------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    seed: int
    n_iter: int = 0
    inertia_history: tuple[float, ...] = ()


def squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact pairwise squared Euclidean distances, computed in row chunks."""
    out = np.empty((X.shape[0], C.shape[0]))
    for start in range(0, X.shape[0], _CHUNK):
        diff = X[start : start + _CHUNK, None, :] - C[None, :, :]
        out[start : start + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = squared_distances(X, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than k; duplicates are allowed as seeds
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = X[idx]
        np.minimum(closest, squared_distances(X, centers[c : c + 1])[:, 0], out=closest)
    return centers


def _lloyd(X, k, rng, max_iters, tol):
    centroids = _kmeans_pp(X, k, rng)
    history = []
    n_iter = 0
    while True:
        d2 = squared_distances(X, centroids)
        labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(X.shape[0]), labels]
        inertia = float(point_d2.sum())
        if history:
            # Lloyd steps never increase the objective; allow rounding slack
            assert inertia <= history[-1] * (1 + 1e-12) + 1e-12, (inertia, history[-1])
        history.append(inertia)
        if n_iter >= max_iters:
            break
        counts = np.bincount(labels, minlength=k)
        sums = np.stack([np.bincount(labels, weights=X[:, j], minlength=k) for j in range(X.shape[1])], axis=1)
        new = centroids.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        for c in np.flatnonzero(~filled):
            far = int(np.argmax(point_d2))
            new[c] = X[far]
            point_d2[far] = 0.0
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        n_iter += 1
        if shift < tol:
            d2 = squared_distances(X, centroids)
            labels = np.argmin(d2, axis=1)
            inertia = float(d2[np.arange(X.shape[0]), labels].sum())
            assert inertia <= history[-1] * (1 + 1e-12) + 1e-12
            history.append(inertia)
            break
    return centroids, labels, inertia, n_iter, tuple(history)


def kmeans_fit(
    matrix,
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    tol: float = 1e-4,
    n_init: int = 1,
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` restarts."""
    X = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, float)
    if not 1 <= k <= X.shape[0]:
        raise ClusteringError(f"k={k} must lie in [1, n_rows={X.shape[0]}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        run = _lloyd(X, k, rng, max_iters, tol)
        if best is None or run[2] < best[2]:
            best = run
    centroids, labels, inertia, n_iter, history = best
    return ClusterModel(k, centroids, labels, inertia, seed, n_iter, history)


# -- anomaly rules --------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyRules:
    near_zero_absolute: float = 0.0
    near_zero_ratio: float = 0.5
    high_outlier_ratio: float = 10.0
    purity: float = 0.99

    def __post_init__(self):
        if not 0 < self.near_zero_ratio < 1:
            raise ValueError("near_zero_ratio must lie in (0, 1)")
        if not self.high_outlier_ratio > 1:
            raise ValueError("high_outlier_ratio must exceed 1")


def flag_levels(levels, rules: AnomalyRules) -> tuple[np.ndarray, np.ndarray]:
    """Flag anomalously low / high entries of a set of dose-rate levels.

    High: every level above the lowest gap (above the median) where a level
    exceeds ``high_outlier_ratio`` times the next smaller one. Low, among the
    remaining levels: those at or below ``near_zero_absolute`` plus every
    level under the highest gap (below the median) where a level is less
    than ``near_zero_ratio`` times the next larger one.
    """
    levels = np.asarray(levels, dtype=float)
    low = levels <= rules.near_zero_absolute
    high = np.zeros(levels.shape, dtype=bool)
    if levels.size < 2:
        return low, high
    order = np.argsort(levels, kind="stable")
    s = levels[order]

    median = np.median(s)
    cut = len(s)
    for i in range(len(s) - 1, 0, -1):
        if s[i] <= median or s[i - 1] <= rules.near_zero_absolute:
            break
        if s[i] > rules.high_outlier_ratio * s[i - 1]:
            cut = i
    high[order[cut:]] = True

    rest = s[:cut]
    median = np.median(rest)
    gap = -1
    for i in range(len(rest) - 1):
        if rest[i] >= median:
            break
        if rest[i] < rules.near_zero_ratio * rest[i + 1]:
            gap = i
    low[order[: gap + 1]] = True
    return low, high


def rowwise_flags(values, rules: AnomalyRules) -> np.ndarray:
    """Apply :func:`flag_levels` to the distinct per-row readings."""
    values = np.asarray(values, dtype=float)
    distinct, inverse = np.unique(values, return_inverse=True)
    low, high = flag_levels(distinct, rules)
    return (low | high)[inverse]


def cluster_means(values, assignments, k) -> np.ndarray:
    counts = np.bincount(assignments, minlength=k)
    sums = np.bincount(assignments, weights=values, minlength=k)
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def isolation_score(values, assignments, k, rules: AnomalyRules) -> float:
    """Fraction of rule-flagged rows living in clusters at least ``purity`` flagged."""
    flags = rowwise_flags(values, rules)
    if not flags.any():
        return 1.0
    counts = np.bincount(assignments, minlength=k)
    flagged = np.bincount(assignments, weights=flags.astype(float), minlength=k)
    purity = flagged / np.maximum(counts, 1)
    pure_rows = purity[assignments] >= rules.purity
    return float(pure_rows[flags].mean())


@dataclass(frozen=True)
class ClusterSearch:
    k: int
    met: bool
    scores: dict


def search_cluster_count(
    matrix,
    values,
    k_min: int = 5,
    k_max: int = 100,
    n_trials: int = 10,
    rules: AnomalyRules = AnomalyRules(),
    seed: int = 0,
    **kmeans_kw,
) -> ClusterSearch:
    """Random search over cluster counts for the smallest k isolating the anomalies."""
    if k_min > k_max:
        raise ClusteringError(f"k_min={k_min} exceeds k_max={k_max}")
    n_rows = matrix.n_rows if isinstance(matrix, FeatureMatrix) else len(matrix)
    k_max = min(k_max, n_rows)
    candidates = np.arange(k_min, k_max + 1)
    rng = np.random.default_rng(seed)
    n_trials = min(n_trials, candidates.size)
    ks = sorted(int(k) for k in rng.choice(candidates, size=n_trials, replace=False))
    scores = {}
    for k in ks:
        model = kmeans_fit(matrix, k, seed=seed + k, **kmeans_kw)
        scores[k] = isolation_score(values, model.assignments, k, rules)
        logger.debug("k=%d isolation=%.4f", k, scores[k])
    meeting = [k for k in ks if scores[k] >= 1.0]
    if meeting:
        return ClusterSearch(meeting[0], True, scores)
    best = max(ks, key=lambda k: (scores[k], -k))
    logger.warning("no cluster count isolates all anomalies; best k=%d (%.3f)", best, scores[best])
    return ClusterSearch(best, False, scores)


# -- labeled data ---------------------------------------------------------------


@dataclass(frozen=True)
class LabeledDataset:
    matrix: FeatureMatrix
    labels: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        prov = np.asarray(self.provenance, dtype="<U9")
        if labels.shape != (self.matrix.n_rows,) or prov.shape != labels.shape:
            raise ValueError("labels/provenance length must equal row count")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be binary")
        if (labels[prov == SYNTHETIC] != 1).any():
            raise ValueError("synthetic rows must carry label 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "provenance", prov)

    def __len__(self):
        return self.matrix.n_rows

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.matrix.select_rows(idx), self.labels[idx], self.provenance[idx])


@dataclass(frozen=True)
class AnomalyLabels:
    labels: np.ndarray
    low_clusters: tuple[int, ...]
    high_clusters: tuple[int, ...]
    means: np.ndarray


def label_anomalies(values, clusters: ClusterModel, rules: AnomalyRules = AnomalyRules()) -> AnomalyLabels:
    """Label every row of each low/high anomalous cluster as 1.

    ``values`` are the raw µSv/h readings of the rows the clusters were
    fitted on.
    """
    values = np.asarray(values, dtype=float)
    means = cluster_means(values, clusters.assignments, clusters.k)
    used = np.flatnonzero(~np.isnan(means))
    low, high = flag_levels(means[used], rules)
    if (low | high).all():
        raise ClusteringError("every cluster was flagged anomalous; rules are degenerate")
    flagged = np.zeros(clusters.k, dtype=bool)
    flagged[used[low | high]] = True
    labels = flagged[clusters.assignments].astype(np.int8)
    return AnomalyLabels(
        labels,
        tuple(int(c) for c in used[low]),
        tuple(int(c) for c in used[high]),
        means,
    )


# -- SMOTE ----------------------------------------------------------------------


@dataclass(frozen=True)
class SmoteConfig:
    n_synthetic: int
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        if self.n_synthetic < 0:
            raise ValueError("n_synthetic must be non-negative")


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other rows (Euclidean; ties to lower index)."""
    n = X.shape[0]
    out = np.empty((n, k), dtype=np.intp)
    for start in range(0, n, 256):
        d2 = squared_distances(X[start : start + 256], X)
        rows = np.arange(d2.shape[0])
        d2[rows, start + rows] = np.inf
        out[start : start + 256] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def smote_oversample(minority, config: SmoteConfig) -> np.ndarray:
    """Interpolate ``n_synthetic`` rows between minority rows and their neighbours."""
    X = np.asarray(minority.values if isinstance(minority, FeatureMatrix) else minority, float)
    m = X.shape[0]
    if m < 2:
        raise ValueError(f"SMOTE needs at least 2 minority rows, got {m}")
    k = config.k_neighbors
    if k >= m:
        logger.warning("k_neighbors=%d >= minority count %d; clamping to %d", k, m, m - 1)
        k = m - 1
    if config.n_synthetic == 0:
        return np.empty((0, X.shape[1]))
    nn = nearest_neighbors(X, k)
    rng = np.random.default_rng(config.seed)
    base = rng.integers(m, size=config.n_synthetic)
    pick = rng.integers(k, size=config.n_synthetic)
    lam = rng.random(config.n_synthetic)
    partner = nn[base, pick]
    return X[base] + lam[:, None] * (X[partner] - X[base])


def build_attack_dataset(
    labeled: LabeledDataset,
    n_synthetic: int,
    noise: NoiseConfig,
    seed: int = 0,
    k_neighbors: int = 5,
) -> LabeledDataset:
    """Append SMOTE attack rows, add Gaussian noise and shuffle."""
    minority = labeled.matrix.values[labeled.labels == 1]
    synth = smote_oversample(minority, SmoteConfig(n_synthetic, k_neighbors, seed))
    values = np.vstack([labeled.matrix.values, synth])
    labels = np.concatenate([labeled.labels, np.ones(len(synth), dtype=np.int8)])
    prov = np.concatenate([labeled.provenance, np.full(len(synth), SYNTHETIC)])
    matrix = FeatureMatrix(values, labeled.matrix.column_names)
    matrix = inject_noise(matrix, noise, rows=(prov == SYNTHETIC) if noise.synthetic_only else None)
    order = np.random.default_rng(seed + 1).permutation(len(labels))
    return LabeledDataset(matrix.select_rows(order), labels[order], prov[order])


def write_labels(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,provenance\n")
        for lab, prov in zip(dataset.labels.tolist(), dataset.provenance.tolist()):
            fh.write(f"{lab},{prov}\n")


def read_labels(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["label", "provenance"]:
            raise ValueError(f"{path}: expected header 'label,provenance'")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    labels = np.array([int(r[0]) for r in rows], dtype=np.int8)
    prov = np.array([r[1] for r in rows], dtype="<U9")
    return labels, prov
