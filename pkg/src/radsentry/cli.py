"""``radsentry`` command-line entry point.

Every subcommand prints one JSON summary line on stdout. Exit codes: 0 on
success, 1 on a runtime failure, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, PipelineConfig, bundled_config_path, config_from_dict, load_config
from .ingest import SchemaError, TimestampError, read_readings, write_readings
from .model_store import DecodeError, export_compact, inspect_blob, load_compact
from .preprocess import MatrixError, read_matrix, write_matrix

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_CATEGORIES = (
    (ConfigError, "config"),
    (DecodeError, "decode"),
    (SchemaError, "schema"),
    (TimestampError, "timestamp"),
    (MatrixError, "matrix"),
    (pipeline.StageError, "stage"),
    (FileNotFoundError, "io"),
    (OSError, "io"),
    (ValueError, "value"),
)


def _category(exc: BaseException) -> str:
    for cls, name in _CATEGORIES:
        if isinstance(exc, cls):
            return name
    return "runtime"


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("RADSENTRY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"RADSENTRY_THREADS must be an integer, got {env!r}") from None
    return 1


def _load(args) -> PipelineConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict(json.loads(bundled_config_path().read_text(encoding="utf-8")))
    # flags override config keys
    if args.seed is not None:
        cfg.seed = args.seed
    if args.work_dir is not None:
        cfg.paths.work_dir = args.work_dir
    if getattr(args, "input", None) is not None:
        cfg.paths.input = args.input
    cfg.validate()
    return cfg


def _emit(command: str, payload: dict, stream=None) -> None:
    print(json.dumps({"command": command, "status": "ok", **payload}, sort_keys=True, default=str), file=stream or sys.stdout)


def cmd_ingest(args, cfg, ws):
    out = pipeline.stage_ingest(cfg, ws)
    if args.out:
        shutil.copyfile(ws["readings"], args.out)
        out["out"] = args.out
    return out


def cmd_preprocess(args, cfg, ws):
    if args.readings:
        ws.ensure()
        write_readings(read_readings(args.readings), ws["readings"])
    out = pipeline.stage_preprocess(cfg, ws)
    if args.out:
        write_matrix(read_matrix(ws["features"]), args.out)
        out["out"] = args.out
    return out


def cmd_label(args, cfg, ws):
    k = None if args.k in (None, "search") else int(args.k)
    if args.k == "search":
        cfg.clustering.k = None
    return pipeline.stage_label(cfg, ws, k=k)


def cmd_synth(args, cfg, ws):
    return pipeline.stage_synth(cfg, ws, n_synthetic=args.n)


def cmd_train(args, cfg, ws):
    return pipeline.stage_train(cfg, ws, model=args.model, threads=args.threads)


def cmd_tune(args, cfg, ws):
    return pipeline.stage_tune(cfg, ws, n_trials=args.trials, threads=args.threads, figures=not args.no_figures)


def cmd_compact(args, cfg, ws):
    return pipeline.stage_compact(cfg, ws, threshold=args.threshold, figures=not args.no_figures)


def cmd_eval(args, cfg, ws):
    return pipeline.stage_eval(cfg, ws, threads=args.threads, bench=args.bench, figures=not args.no_figures)


def cmd_bench(args, cfg, ws):
    return pipeline.stage_bench(cfg, ws, threads=args.threads, figures=not args.no_figures)


def cmd_export(args, cfg, ws):
    src = Path(args.model) if args.model else ws["model"]
    blob = src.read_bytes()
    # decode and re-encode so only well-formed blobs are published
    out_blob = export_compact(load_compact(blob))
    if out_blob != blob:
        raise DecodeError(f"{src}: blob does not re-encode identically")
    Path(args.out).write_bytes(out_blob)
    info = inspect_blob(out_blob)
    return {"out": args.out, "bytes": info.size, "trees": info.n_trees, "nodes": info.n_nodes, "retained": list(info.retained)}


def cmd_predict(args, cfg, ws):
    model = load_compact(Path(args.model).read_bytes())
    matrix = read_matrix(args.matrix)
    labels, probs = pipeline.predict_matrix(model, matrix)
    out = sys.stdout if args.out is None else open(args.out, "w", newline="", encoding="utf-8")
    try:
        pipeline.write_predictions(labels, probs, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return {"rows": int(labels.size), "positives": int(labels.sum())}


def cmd_pipeline(args, cfg, ws):
    return pipeline.run_pipeline(cfg, threads=args.threads, bench=args.bench, figures=not args.no_figures)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (default: bundled desk config)")
    common.add_argument("--work-dir", help="artifact directory (overrides paths.work_dir)")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--threads", type=int, help="worker cap; falls back to RADSENTRY_THREADS, then 1")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="radsentry", description="Radiation-data intrusion detection pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("ingest", cmd_ingest, "parse and unit-filter a Safecast CSV export")
    sp.add_argument("--input", help="export CSV (overrides paths.input)")
    sp.add_argument("--out", help="also write the filtered readings here")
    sp = add("preprocess", cmd_preprocess, "scale and one-hot encode readings")
    sp.add_argument("--input", dest="readings", help="readings CSV (default: <work-dir>/readings.csv)")
    sp.add_argument("--out", help="also write the feature matrix here (.csv or .rdm)")
    sp = add("label", cmd_label, "K-Means anomaly labeling")
    sp.add_argument("--k", help="cluster count or 'search'")
    sp = add("synth", cmd_synth, "SMOTE attack synthesis and noise")
    sp.add_argument("--n", type=int, help="synthetic row count (default: ratio x original rows)")
    sp = add("train", cmd_train, "fit one model on the training split (GBDT is saved)")
    sp.add_argument("--model", choices=("gbdt", "rf", "logreg", "svm"), default="gbdt")
    sp = add("tune", cmd_tune, "random-search GBDT hyperparameters")
    sp.add_argument("--trials", type=int)
    sp = add("compact", cmd_compact, "feature selection and compact retrain")
    sp.add_argument("--threshold", type=float)
    sp = add("eval", cmd_eval, "compare all models on the test split; write report.csv")
    sp.add_argument("--bench", action="store_true", help="also time predictions (bench.csv)")
    add("bench", cmd_bench, "per-sample prediction latency (bench.csv)")
    sp = add("export", cmd_export, "validate and copy a compact model blob")
    sp.add_argument("--model", help="source blob (default: <work-dir>/model.rds1)")
    sp.add_argument("--out", required=True)
    sp = add("predict", cmd_predict, "label a feature matrix with a compact model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", dest="matrix", required=True, help="feature matrix (.csv or .rdm)")
    sp.add_argument("--out", help="write predictions here instead of stdout")
    sp = add("pipeline", cmd_pipeline, "run every stage end to end")
    sp.add_argument("--input", help="export CSV (overrides paths.input)")
    sp.add_argument("--bench", action="store_true", help="also time predictions (bench.csv)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.threads = resolve_threads(args.threads)
        cfg = _load(args)
        ws = pipeline.Workspace(cfg.work_dir())
        payload = args.func(args, cfg, ws)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 1
        category = _category(exc)
        print(f"radsentry {args.command}: {category} error: {exc}", file=sys.stderr)
        print(json.dumps({"command": args.command, "status": "error", "category": category, "message": str(exc)}))
        return EXIT_FAIL
    # predictions on stdout keep the summary out of the data stream
    to_stderr = args.command == "predict" and args.out is None
    _emit(args.command, payload, sys.stderr if to_stderr else None)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
