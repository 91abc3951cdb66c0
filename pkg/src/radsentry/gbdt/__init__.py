from .binning import BinMapper
from .boosting import (
    GbdtParams,
    GradientBoostedEnsemble,
    gbdt_fit,
    gbdt_importances,
    gbdt_predict_proba,
    gbdt_predict_raw,
    log_loss,
    sigmoid,
    truncate,
)
from .tree import Tree

__all__ = [
    "BinMapper",
    "GbdtParams",
    "GradientBoostedEnsemble",
    "Tree",
    "gbdt_fit",
    "gbdt_importances",
    "gbdt_predict_proba",
    "gbdt_predict_raw",
    "log_loss",
    "sigmoid",
    "truncate",
]
