"""Pipeline stages. Each stage reads its inputs from and writes its outputs
to the work directory, so stages can be re-run individually."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plotting
from .baselines import logreg_fit, rf_fit, svm_fit
from .cluster_synth import (
    ORIGINAL,
    LabeledDataset,
    build_attack_dataset,
    kmeans_fit,
    label_anomalies,
    read_labels,
    search_cluster_count,
    write_labels,
)
from .config import PipelineConfig
from .evaluation import (
    ModelRow,
    compute_metrics,
    format_table,
    paired_latency,
    split_train_test,
    write_report_csv,
)
from .gbdt import GbdtParams, gbdt_fit, gbdt_importances, sigmoid
from .ingest import ingest_file, read_readings, write_readings
from .model_store import read_compact, save_compact
from .preprocess import FeatureMatrix, Preprocessor, read_matrix, write_matrix
from .tuning import (
    FeatureSelection,
    random_search,
    retrain_compact,
    select_features,
    write_trials_csv,
)

logger = logging.getLogger(__name__)

FILES = {
    "readings": "readings.csv",
    "preprocessor": "preprocessor.json",
    "features": "features.csv",
    "original_labels": "original_labels.csv",
    "clusters": "clusters.json",
    "dataset": "dataset.csv",
    "dataset_labels": "dataset_labels.csv",
    "default_model": "model_default.rds1",
    "trials": "trials.csv",
    "best_params": "best_params.json",
    "tuned_model": "model_tuned.rds1",
    "selection": "selection.json",
    "model": "model.rds1",
    "report": "report.csv",
    "bench": "bench.csv",
    "fig_metrics": "metrics.png",
    "fig_latency": "latency.png",
    "fig_trials": "trials.png",
    "fig_importances": "importances.png",
}

MODEL_NAMES = {
    "gbdt": "GBDT",
    "rf": "Random Forest",
    "logreg": "Logistic Regression",
    "svm": "SVM (RBF)",
    "tuned": "GBDT tuned",
    "compact": "GBDT tuned compact",
}


class StageError(RuntimeError):
    pass


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def __getitem__(self, key) -> Path:
        return self.root / FILES[key]

    def require(self, *keys):
        for k in keys:
            if not self[k].exists():
                raise StageError(f"missing {self[k]}; run the stage that produces it first")

    def ensure(self):
        self.root.mkdir(parents=True, exist_ok=True)
        return self


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- stages ---------------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, ws: Workspace) -> dict:
    src = cfg.input_path()
    if not src.is_file():
        raise StageError(f"input export not found: {src}")
    readings, report = ingest_file(src, cfg.schema, cfg.units)
    if not readings:
        raise StageError(f"{src}: no readings survived unit filtering")
    write_readings(readings, ws.ensure()["readings"])
    return {"input": str(src), **asdict(report)}


def stage_preprocess(cfg: PipelineConfig, ws: Workspace) -> dict:
    ws.require("readings")
    readings = read_readings(ws["readings"])
    pre = Preprocessor.fit(readings)
    features = pre.transform(readings)
    pre.save(ws["preprocessor"])
    write_matrix(features, ws["features"])
    return {"rows": features.n_rows, "columns": features.n_cols, "devices": len(pre.encoder.devices)}


def stage_label(cfg: PipelineConfig, ws: Workspace, k: int | None = None) -> dict:
    ws.require("readings", "features")
    features = read_matrix(ws["features"])
    values = np.array([r.value_usv_h for r in read_readings(ws["readings"])])
    c = cfg.clustering
    k = c.k if k is None else k
    kw = dict(max_iters=c.max_iters, tol=c.tol, n_init=c.n_init)
    seed = cfg.stage_seed("cluster")
    search = None
    if k is None:
        search = search_cluster_count(features, values, c.k_min, c.k_max, c.n_trials, cfg.anomaly, seed, **kw)
        k = search.k
    clusters = kmeans_fit(features, k, seed=seed + k, **kw)
    lab = label_anomalies(values, clusters, cfg.anomaly)
    ds = LabeledDataset(features, lab.labels, np.full(features.n_rows, ORIGINAL))
    write_labels(ds, ws["original_labels"])
    info = {
        "k": k,
        "searched": search is not None,
        "isolation_met": None if search is None else search.met,
        "scores": None if search is None else {str(kk): v for kk, v in search.scores.items()},
        "low_clusters": list(lab.low_clusters),
        "high_clusters": list(lab.high_clusters),
        "inertia": clusters.inertia,
        "anomalies": int(lab.labels.sum()),
    }
    _write_json(ws["clusters"], info)
    return {k2: info[k2] for k2 in ("k", "searched", "isolation_met", "anomalies")}


def stage_synth(cfg: PipelineConfig, ws: Workspace, n_synthetic: int | None = None) -> dict:
    ws.require("features", "original_labels")
    features = read_matrix(ws["features"])
    labels, prov = read_labels(ws["original_labels"])
    original = LabeledDataset(features, labels, prov)
    if labels.sum() < 2:
        raise StageError(
            f"labeling flagged {int(labels.sum())} anomalous row(s); at least 2 are needed to synthesize attacks "
            "(try a different clustering.k or the k search)"
        )
    n = cfg.n_synthetic(len(original)) if n_synthetic is None else n_synthetic
    ds = build_attack_dataset(
        original, n, cfg.noise(), seed=cfg.stage_seed("smote"), k_neighbors=cfg.synth.k_neighbors
    )
    write_matrix(ds.matrix, ws["dataset"])
    write_labels(ds, ws["dataset_labels"])
    return {"rows": len(ds), "synthetic": n, "positive_fraction": float(ds.labels.mean())}


def load_dataset(ws: Workspace) -> LabeledDataset:
    ws.require("dataset", "dataset_labels")
    labels, prov = read_labels(ws["dataset_labels"])
    return LabeledDataset(read_matrix(ws["dataset"]), labels, prov)


def splits(cfg: PipelineConfig, ws: Workspace):
    """(train, test, fit, validation); ``fit``/``validation`` partition ``train``."""
    train, test = split_train_test(load_dataset(ws), cfg.split())
    fit, val = split_train_test(train, cfg.validation_split())
    return train, test, fit, val


def stage_train(cfg: PipelineConfig, ws: Workspace, model: str = "gbdt", threads: int = 1) -> dict:
    """Fit one model on the training split. Only the GBDT is persisted."""
    train, test, _, _ = splits(cfg, ws)
    X, y = train.matrix.values, train.labels
    out = {"model": model}
    if model == "gbdt":
        fitted = gbdt_fit(X, y, cfg.gbdt_params())
        out.update(trees=len(fitted.trees), blob_bytes=save_compact(fitted, ws["default_model"]))
    elif model == "rf":
        fitted = rf_fit(X, y, cfg.forest_params(), threads=threads)
    elif model == "logreg":
        fitted = logreg_fit(X, y, cfg.logreg_params())
    elif model == "svm":
        fitted = svm_fit(X, y, cfg.svm_params())
    else:
        raise ValueError(f"unknown model {model!r}")
    m = compute_metrics(fitted.predict(test.matrix.values), test.labels)
    out.update(test_accuracy=m.accuracy, test_f1=m.f1)
    return out


def stage_tune(cfg: PipelineConfig, ws: Workspace, n_trials: int | None = None, threads: int = 1, figures: bool = True) -> dict:
    _, _, fit, val = splits(cfg, ws)
    n_trials = cfg.tune.n_trials if n_trials is None else n_trials
    best, trials = random_search(
        cfg.tune.space, n_trials, fit, val, seed=cfg.stage_seed("tune"), base=cfg.gbdt_params(), threads=threads
    )
    # untuned reference on the same fit/validation slices
    default = gbdt_fit(fit.matrix.values, fit.labels, cfg.gbdt_params())
    dm = compute_metrics(default.predict(val.matrix.values), val.labels)
    write_trials_csv(trials, ws["trials"])
    winner = min(trials, key=lambda t: t.rank)
    _write_json(
        ws["best_params"],
        {
            "params": asdict(best),
            "validation": asdict(winner.metrics),
            "default_validation": asdict(dm),
            "n_trials": len(trials),
        },
    )
    if figures:
        plotting.plot_trials(trials, ws.root / FILES["fig_trials"])
    return {
        "best": {k: getattr(best, k) for k in ("n_estimators", "max_depth", "num_leaves")},
        "validation_f1": winner.metrics.f1,
        "default_validation_f1": dm.f1,
    }


def best_params(ws: Workspace) -> GbdtParams:
    ws.require("best_params")
    return GbdtParams(**_read_json(ws["best_params"])["params"])


def stage_compact(cfg: PipelineConfig, ws: Workspace, threshold: float | None = None, figures: bool = True) -> dict:
    train, test, _, _ = splits(cfg, ws)
    params = best_params(ws)
    threshold = cfg.compact_threshold if threshold is None else threshold
    full = gbdt_fit(train.matrix.values, train.labels, params)
    importances = gbdt_importances(full, normalized=True)
    selection = select_features(importances, threshold)
    compact = retrain_compact(train, selection, params)
    save_compact(full, ws["tuned_model"])
    size = save_compact(compact, ws["model"])
    names = train.matrix.column_names
    _write_json(
        ws["selection"],
        {
            "threshold": threshold,
            "retained": list(selection.retained),
            "retained_names": [names[i] for i in selection.retained],
            "cumulative_importance": selection.cumulative_importance,
            "importances": importances.tolist(),
        },
    )
    if figures:
        plotting.plot_importances(names, importances, selection.retained, ws.root / FILES["fig_importances"])
    fm = compute_metrics(full.predict(test.matrix.values), test.labels)
    cm = compute_metrics(compact.predict(test.matrix.values), test.labels)
    return {
        "retained": selection.n_retained,
        "of": len(names),
        "cumulative_importance": selection.cumulative_importance,
        "blob_bytes": size,
        "full_f1": fm.f1,
        "compact_f1": cm.f1,
    }


def read_selection(ws: Workspace) -> FeatureSelection:
    d = _read_json(ws["selection"])
    return FeatureSelection(tuple(d["retained"]), d["cumulative_importance"], d["threshold"])


def fit_baselines(cfg: PipelineConfig, train: LabeledDataset, threads: int = 1) -> dict:
    X, y = train.matrix.values, train.labels
    return {
        "rf": rf_fit(X, y, cfg.forest_params(), threads=threads),
        "logreg": logreg_fit(X, y, cfg.logreg_params()),
        "svm": svm_fit(X, y, cfg.svm_params()),
    }


def collect_models(cfg: PipelineConfig, ws: Workspace, train: LabeledDataset, threads: int = 1) -> dict:
    """Every report model: stored GBDT blobs plus freshly fitted baselines."""
    ws.require("default_model")
    models = {"gbdt": read_compact(ws["default_model"])}
    models.update(fit_baselines(cfg, train, threads))
    for key, f in (("tuned", "tuned_model"), ("compact", "model")):
        if ws[f].exists():
            models[key] = read_compact(ws[f])
    return models


def stage_eval(cfg: PipelineConfig, ws: Workspace, threads: int = 1, bench: bool = False, figures: bool = True) -> dict:
    train, test, _, _ = splits(cfg, ws)
    models = collect_models(cfg, ws, train, threads)
    Xte, yte = test.matrix.values, test.labels
    rows = [ModelRow(MODEL_NAMES[k], compute_metrics(m.predict(Xte), yte)) for k, m in models.items()]
    write_report_csv(rows, ws["report"])
    if figures:
        plotting.plot_metrics(rows, ws.root / FILES["fig_metrics"])
    out = {"report": str(ws["report"]), "models": {r.model: round(r.metrics.f1, 6) for r in rows}}
    if bench:
        out.update(_bench(cfg, ws, models, rows, Xte, figures))
    logger.info("\n%s", format_table(rows))
    return out


def _bench(cfg, ws, models, rows, X, figures) -> dict:
    lat = paired_latency(
        {MODEL_NAMES[k]: m for k, m in models.items()},
        X,
        rounds=cfg.bench.measured_passes,
        warmup_passes=cfg.bench.warmup_passes,
    )
    timed = [ModelRow(r.model, r.metrics.with_latency(lat[r.model])) for r in rows]
    write_report_csv(timed, ws["bench"])
    if figures:
        plotting.plot_latency([r.model for r in timed], [lat[r.model] for r in timed], ws.root / FILES["fig_latency"])
    return {"bench": str(ws["bench"]), "pred_time_us": {k: round(v, 4) for k, v in lat.items()}}


def stage_bench(cfg: PipelineConfig, ws: Workspace, threads: int = 1, figures: bool = True) -> dict:
    train, test, _, _ = splits(cfg, ws)
    models = collect_models(cfg, ws, train, threads)
    Xte, yte = test.matrix.values, test.labels
    rows = [ModelRow(MODEL_NAMES[k], compute_metrics(m.predict(Xte), yte)) for k, m in models.items()]
    return _bench(cfg, ws, models, rows, Xte, figures)


def run_pipeline(cfg: PipelineConfig, threads: int = 1, bench: bool = False, figures: bool = True) -> dict:
    ws = Workspace(cfg.work_dir()).ensure()
    summary = {}
    summary["ingest"] = stage_ingest(cfg, ws)
    summary["preprocess"] = stage_preprocess(cfg, ws)
    summary["label"] = stage_label(cfg, ws)
    summary["synth"] = stage_synth(cfg, ws)
    summary["train"] = stage_train(cfg, ws)
    summary["tune"] = stage_tune(cfg, ws, threads=threads, figures=figures)
    summary["compact"] = stage_compact(cfg, ws, figures=figures)
    summary["eval"] = stage_eval(cfg, ws, threads=threads, bench=bench, figures=figures)
    return summary


def write_predictions(labels, probs, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    for lab, p in zip(labels.tolist(), probs.tolist()):
        w.writerow([lab, f"{p:.6f}"])


def predict_matrix(model, matrix: FeatureMatrix):
    raw = model.predict_raw(matrix.values)
    return (raw >= 0).astype(np.int8), sigmoid(raw)
