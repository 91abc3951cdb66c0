"""Splitting, detection metrics and per-sample latency benchmarking."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from threadpoolctl import threadpool_limits

from .cluster_synth import LabeledDataset

REPORT_COLUMNS = ("model", "accuracy", "precision", "recall", "f1", "pred_time_us")


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.20
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_indices(labels, config: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, test) row indices; disjoint and exhaustive."""
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(config.seed)
    if not config.stratified:
        perm = rng.permutation(n)
        n_test = min(max(_round_half_up(config.test_fraction * n), 1), n - 1)
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])
    test = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise ValueError(f"class {cls} has {members.size} row(s); stratification needs >= 2")
        n_test = min(max(_round_half_up(config.test_fraction * members.size), 1), members.size - 1)
        test.append(rng.permutation(members)[:n_test])
    test = np.sort(np.concatenate(test))
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def split_train_test(dataset: LabeledDataset, config: SplitConfig = SplitConfig()):
    train, test = split_indices(dataset.labels, config)
    return dataset.subset(train), dataset.subset(test)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    prediction_time_per_sample: float | None = None
    degenerate: bool = False

    def with_latency(self, us: float) -> "MetricsReport":
        return MetricsReport(self.accuracy, self.precision, self.recall, self.f1, us, self.degenerate)


def confusion(predicted, actual) -> ConfusionCounts:
    p = np.asarray(predicted).astype(bool)
    a = np.asarray(actual).astype(bool)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {a.shape} labels")
    return ConfusionCounts(
        int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & a)), int(np.sum(~p & ~a))
    )


def compute_metrics(predicted, actual) -> MetricsReport:
    """Attack (label 1) is the positive class; zero denominators give 0."""
    c = confusion(predicted, actual)
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    accuracy = ratio(c.tp + c.tn, c.total)
    precision = ratio(c.tp, c.tp + c.fp)
    recall = ratio(c.tp, c.tp + c.fn)
    f1 = ratio(2 * precision * recall, precision + recall)
    return MetricsReport(accuracy, precision, recall, f1, degenerate=degenerate)


def _predictor(model):
    return model if callable(model) and not hasattr(model, "predict") else model.predict


def bench_latency(model, X, warmup_passes: int = 3, measured_passes: int = 10) -> float:
    """Median wall-clock µs per sample over full-matrix predictions, one thread."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot benchmark on an empty matrix")
    predict = _predictor(model)
    times = []
    with threadpool_limits(limits=1):
        for _ in range(warmup_passes):
            predict(X)
        for _ in range(measured_passes):
            t0 = time.perf_counter()
            predict(X)
            times.append(time.perf_counter() - t0)
    return float(np.median(times)) / X.shape[0] * 1e6


def paired_latency(models: Mapping[str, object], X, rounds: int = 15, warmup_passes: int = 3) -> dict:
    """Interleaved latency measurement; robust to slow drifts in machine load.

    Each round times one full-matrix pass of every model in turn; the
    reported value per model is the median over rounds (µs per sample).
    """
    X = np.asarray(X, dtype=np.float64)
    predictors = {name: _predictor(m) for name, m in models.items()}
    samples = {name: [] for name in predictors}
    with threadpool_limits(limits=1):
        for p in predictors.values():
            for _ in range(warmup_passes):
                p(X)
        for _ in range(rounds):
            for name, p in predictors.items():
                t0 = time.perf_counter()
                p(X)
                samples[name].append(time.perf_counter() - t0)
    return {name: float(np.median(s)) / X.shape[0] * 1e6 for name, s in samples.items()}


@dataclass
class ModelRow:
    model: str
    metrics: MetricsReport
    predictions: np.ndarray | None = None


def compare_models(
    fitters: Mapping[str, Callable],
    train: LabeledDataset,
    test: LabeledDataset,
    bench: bool = False,
) -> tuple[list[ModelRow], dict]:
    """Fit each model on ``train``, score it on ``test``.

    ``fitters`` maps a display name to ``fit(X, y) -> model``. Returns the
    report rows and the fitted models.
    """
    rows, models = [], {}
    Xtr, ytr = train.matrix.values, train.labels
    Xte, yte = test.matrix.values, test.labels
    for name, fit in fitters.items():
        model = fit(Xtr, ytr)
        pred = np.asarray(model.predict(Xte))
        metrics = compute_metrics(pred, yte)
        if bench:
            metrics = metrics.with_latency(bench_latency(model, Xte))
        rows.append(ModelRow(name, metrics, pred))
        models[name] = model
    return rows, models


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def write_report_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            m = r.metrics
            w.writerow([r.model, _fmt(m.accuracy), _fmt(m.precision), _fmt(m.recall), _fmt(m.f1), _fmt(m.prediction_time_per_sample)])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def format_table(rows) -> str:
    header = f"{'Model':<28}{'Accuracy (%)':>14}{'Precision (%)':>15}{'Recall (%)':>12}{'F1-score (%)':>14}{'Time/sample (µs)':>18}"
    lines = [header, "-" * len(header)]
    for r in rows:
        m = r.metrics
        t = "" if m.prediction_time_per_sample is None else f"{m.prediction_time_per_sample:.3f}"
        lines.append(
            f"{r.model:<28}{100 * m.accuracy:>14.3f}{100 * m.precision:>15.3f}"
            f"{100 * m.recall:>12.3f}{100 * m.f1:>14.3f}{t:>18}"
        )
    return "\n".join(lines)
