"""Intrinsic (t-SNE, Davies-Bouldin, stage accuracy) and extrinsic (mortality) evaluation."""

from .logreg import DegenerateFit, LogRegModel, fit_logreg
from .metrics import UndefinedMetric, accuracy, auprc, auroc, davies_bouldin, threshold
from .reports import DIRECT, DOWNSTREAM, EvalReport, InputError, run_extrinsic, run_intrinsic, score_binary
from .tsne import Projection2D, conditional_probabilities, tsne_project

__all__ = [
    "DIRECT", "DOWNSTREAM", "DegenerateFit", "EvalReport", "InputError", "LogRegModel", "Projection2D",
    "UndefinedMetric", "accuracy", "auprc", "auroc", "conditional_probabilities", "davies_bouldin", "fit_logreg",
    "run_extrinsic", "run_intrinsic", "score_binary", "threshold", "tsne_project",
]
