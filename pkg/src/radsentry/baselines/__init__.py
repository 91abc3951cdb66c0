from .forest import ForestModel, ForestParams, gini_tree_fit, rf_fit, rf_predict
from .logreg import (
    LinearModel,
    LogRegParams,
    logistic_gradient,
    logistic_objective,
    logreg_fit,
    logreg_predict,
)
from .svm import SvmModel, SvmParams, hinge_objective, hinge_subgradient, svm_fit, svm_predict

__all__ = [
    "ForestModel",
    "ForestParams",
    "LinearModel",
    "LogRegParams",
    "SvmModel",
    "SvmParams",
    "gini_tree_fit",
    "hinge_objective",
    "hinge_subgradient",
    "logistic_gradient",
    "logistic_objective",
    "logreg_fit",
    "logreg_predict",
    "rf_fit",
    "rf_predict",
    "svm_fit",
    "svm_predict",
]
