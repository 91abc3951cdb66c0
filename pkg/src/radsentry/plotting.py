"""Report figures rendered to PNG files (non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_METRICS = ("accuracy", "precision", "recall", "f1")
# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def plot_metrics(rows, path) -> None:
    """Grouped bars of the four detection metrics per model."""
    names = [r.model for r in rows]
    x = np.arange(len(names))
    width = 0.8 / len(_METRICS)
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(names)), 4))
    for i, key in enumerate(_METRICS):
        vals = [100 * getattr(r.metrics, key) for r in rows]
        ax.bar(x + (i - 1.5) * width, vals, width, label=key)
    ax.set_xticks(x, names, rotation=20, ha="right")
    ax.set_ylabel("%")
    lo = min(100 * getattr(r.metrics, k) for r in rows for k in _METRICS)
    ax.set_ylim(max(0.0, lo - 5), 100.5)
    ax.legend(ncol=4, fontsize="small", loc="lower right")
    ax.set_title("Held-out detection metrics")
    _save(fig, path)


def plot_latency(names, micros, path) -> None:
    """Per-sample prediction latency on a log axis."""
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(names)), 4))
    ax.bar(np.arange(len(names)), micros, color="tab:gray")
    ax.set_yscale("log")
    ax.set_xticks(np.arange(len(names)), names, rotation=20, ha="right")
    ax.set_ylabel("µs per sample")
    for i, v in enumerate(micros):
        ax.annotate(f"{v:.3g}", (i, v), ha="center", va="bottom", fontsize="small")
    ax.set_title("Single-threaded prediction latency")
    _save(fig, path)


def plot_trials(trials, path) -> None:
    """Validation F1 of each search trial against its tree count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    n_est = [t.params.n_estimators for t in trials]
    f1 = [t.metrics.f1 for t in trials]
    sc = ax.scatter(n_est, f1, c=[t.params.max_depth for t in trials], cmap="viridis")
    best = min(trials, key=lambda t: t.rank)
    ax.scatter([best.params.n_estimators], [best.metrics.f1], s=160, facecolors="none", edgecolors="red")
    fig.colorbar(sc, ax=ax, label="max_depth")
    ax.set_xlabel("n_estimators")
    ax.set_ylabel("validation F1")
    ax.set_title("Random search trials")
    _save(fig, path)


def plot_importances(names, importances, retained, path) -> None:
    """Normalized gain importances, retained columns highlighted."""
    imp = np.asarray(importances, dtype=float)
    order = np.argsort(-imp, kind="stable")
    keep = set(retained)
    fig, ax = plt.subplots(figsize=(7, max(3, 0.3 * len(order))))
    colors = ["tab:blue" if i in keep else "lightgray" for i in order]
    ax.barh(np.arange(len(order)), imp[order], color=colors)
    ax.set_yticks(np.arange(len(order)), [names[i] for i in order], fontsize="small")
    ax.invert_yaxis()
    ax.set_xlabel("normalized gain")
    ax.set_title(f"Feature importances ({len(keep)} retained)")
    _save(fig, path)
