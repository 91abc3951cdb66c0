"""Random-search hyperparameter tuning and gain-based feature selection."""
from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cluster_synth import LabeledDataset
from .evaluation import MetricsReport, compute_metrics
from .gbdt import GbdtParams, GradientBoostedEnsemble, gbdt_fit, gbdt_importances

logger = logging.getLogger(__name__)

SEARCH_KEYS = ("n_estimators", "max_depth", "num_leaves")
TRIAL_COLUMNS = ("trial", "rank", *SEARCH_KEYS, "accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive integer ranges for the searched GBDT parameters."""

    n_estimators: tuple[int, int] = (10, 50)
    max_depth: tuple[int, int] = (3, 8)
    num_leaves: tuple[int, int] = (4, 20)

    def __post_init__(self):
        for key in SEARCH_KEYS:
            lo, hi = getattr(self, key)
            if int(lo) != lo or int(hi) != hi or lo > hi:
                raise ValueError(f"{key} range must be integers with lower <= upper, got {(lo, hi)}")

    @property
    def radices(self) -> tuple[int, ...]:
        return tuple(getattr(self, k)[1] - getattr(self, k)[0] + 1 for k in SEARCH_KEYS)

    @property
    def size(self) -> int:
        return int(np.prod(self.radices))

    def decode(self, code: int) -> dict:
        """Mixed-radix decoding of a combination index (last key fastest)."""
        out = {}
        for key, radix in zip(reversed(SEARCH_KEYS), reversed(self.radices)):
            code, digit = divmod(int(code), radix)
            out[key] = getattr(self, key)[0] + digit
        return {k: out[k] for k in SEARCH_KEYS}

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in SEARCH_KEYS}

    @classmethod
    def from_dict(cls, d) -> "SearchSpace":
        return cls(**{k: tuple(v) for k, v in d.items()})


def sample_combinations(space: SearchSpace, n_trials: int, seed: int = 0) -> list[dict]:
    """``n_trials`` distinct combinations, uniform without replacement."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if n_trials > space.size:
        warnings.warn(
            f"n_trials={n_trials} exceeds the {space.size} distinct combinations; clamping",
            RuntimeWarning,
        )
        n_trials = space.size
    codes = np.random.default_rng(seed).choice(space.size, size=n_trials, replace=False)
    return [space.decode(c) for c in codes]


@dataclass
class TrialResult:
    index: int
    params: GbdtParams
    metrics: MetricsReport
    rank: int = 0

    def sort_key(self):
        # best first: F1, then accuracy, then fewer trees, then trial order
        return (-self.metrics.f1, -self.metrics.accuracy, self.params.n_estimators, self.index)


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def random_search(
    space: SearchSpace,
    n_trials: int,
    train: LabeledDataset,
    validation: LabeledDataset,
    seed: int = 0,
    base: GbdtParams = GbdtParams(),
    threads: int = 1,
) -> tuple[GbdtParams, list[TrialResult]]:
    """Fit one GBDT per sampled combination and rank them on ``validation``.

    Returns the winning parameters and every trial, in sampling order, with
    ``rank`` filled in (1 = best).
    """
    combos = sample_combinations(space, n_trials, seed)
    Xtr, ytr = train.matrix.values, train.labels
    Xva, yva = validation.matrix.values, validation.labels

    def run(i):
        params = base.with_(**combos[i], seed=trial_seed(seed, i))
        model = gbdt_fit(Xtr, ytr, params)
        return TrialResult(i, params, compute_metrics(model.predict(Xva), yva))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(run, range(len(combos))))
    else:
        trials = [run(i) for i in range(len(combos))]
    for rank, t in enumerate(sorted(trials, key=TrialResult.sort_key), start=1):
        t.rank = rank
    best = min(trials, key=TrialResult.sort_key)
    assert all(best.metrics.f1 >= t.metrics.f1 for t in trials)
    logger.info("random search: best %s f1=%.5f", combos[best.index], best.metrics.f1)
    return best.params, trials


def write_trials_csv(trials, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for t in trials:
            m = t.metrics
            w.writerow(
                [t.index, t.rank, t.params.n_estimators, t.params.max_depth, t.params.num_leaves]
                + [f"{v:.6f}" for v in (m.accuracy, m.precision, m.recall, m.f1)]
            )


@dataclass(frozen=True)
class FeatureSelection:
    retained: tuple[int, ...]
    cumulative_importance: float
    threshold: float = 0.90

    @property
    def n_retained(self) -> int:
        return len(self.retained)


def select_features(importances, threshold: float = 0.90) -> FeatureSelection:
    """Shortest descending-importance prefix reaching ``threshold`` of the total."""
    imp = np.asarray(importances, dtype=np.float64)
    if imp.ndim != 1 or imp.size == 0:
        raise ValueError("importances must be a non-empty vector")
    if (imp < 0).any() or not np.isfinite(imp).all():
        raise ValueError("importances must be finite and non-negative")
    total = imp.sum()
    if total <= 0:
        raise ValueError("all importances are zero; the model never split")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    order = np.argsort(-imp, kind="stable")
    cum = np.cumsum(imp[order]) / total
    # tolerate float round-off at the threshold
    k = int(np.searchsorted(cum, threshold - 1e-12, side="left")) + 1
    k = min(k, imp.size)
    return FeatureSelection(tuple(int(i) for i in order[:k]), float(cum[k - 1]), threshold)


def retrain_compact(dataset: LabeledDataset, selection: FeatureSelection, params: GbdtParams) -> GradientBoostedEnsemble:
    """Refit on the retained columns; the model still accepts full-width rows."""
    X = dataset.matrix.values
    cols = np.asarray(selection.retained, dtype=np.int64)
    if cols.size == 0 or cols.min() < 0 or cols.max() >= X.shape[1]:
        raise ValueError("selection does not match the dataset columns")
    model = gbdt_fit(X[:, cols], dataset.labels, params)
    model.feature_map = tuple(int(c) for c in cols)
    model.n_input_features = X.shape[1]
    return model


def importance_fit(dataset: LabeledDataset, params: GbdtParams) -> np.ndarray:
    """Normalized gain importances of a full-feature fit."""
    return gbdt_importances(gbdt_fit(dataset.matrix.values, dataset.labels, params), normalized=True)
