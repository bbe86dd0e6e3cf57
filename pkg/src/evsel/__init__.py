"""Evidence-tuned LS-SVM classifiers and evidence-based feature-bank selection."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DataError, DegenerateClassError, DegenerateFitError, EvselError,
                     FormatError, NumericalError)
from .evidence import OptimOptions, log_evidence_1d, optimize_lambda
from .lssvm import ClassifierModel, average_scores, predict_scores, train
from .selection import CandidateSet, exhaustive_ensemble, greedy_ensemble, rank_banks
from .spectral import EigenBasis, FeatureBank, LabelMatrix, build_basis

__all__ = [
    "CandidateSet",
    "ClassifierModel",
    "ConvergenceError",
    "DataError",
    "DegenerateClassError",
    "DegenerateFitError",
    "EigenBasis",
    "EvselError",
    "FeatureBank",
    "FormatError",
    "LabelMatrix",
    "NumericalError",
    "OptimOptions",
    "average_scores",
    "build_basis",
    "exhaustive_ensemble",
    "greedy_ensemble",
    "log_evidence_1d",
    "optimize_lambda",
    "predict_scores",
    "rank_banks",
    "train",
]
