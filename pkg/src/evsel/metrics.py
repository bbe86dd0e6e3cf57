"""Evaluation measures: mean per-class accuracy, mean AP, mean AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

MEASURES = ("accuracy", "map", "auc")


@dataclass(frozen=True)
class EvalResult:
    per_class: np.ndarray
    mean: float
    measure: str


def _as_2d(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(getattr(labels, "data", labels), dtype=np.float64)
    if scores.shape != labels.shape:
        raise DataError(f"scores {scores.shape} and labels {labels.shape} differ in shape")
    return scores, labels


def accuracy(scores, labels) -> EvalResult:
    """Mean per-class recall of argmax predictions (ties go to the lower class)."""
    scores, labels = _as_2d(scores, labels)
    if not np.all(labels.sum(axis=1) == 1):
        raise DataError("accuracy requires one-hot labels")
    truth = np.argmax(labels, axis=1)
    pred = np.argmax(scores, axis=1)
    k = labels.shape[1]
    per = np.full(k, np.nan)
    for c in range(k):
        mask = truth == c
        if mask.any():
            per[c] = np.mean(pred[mask] == c)
    present = per[~np.isnan(per)]
    return EvalResult(present, float(np.mean(present)), "accuracy")


def average_precision(scores, labels) -> float:
    """Non-interpolated AP; equal scores keep their index order."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have the same length")
    n_pos = int(np.count_nonzero(labels))
    if n_pos == 0:
        raise DataError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order] != 0
    ranks = np.flatnonzero(hits) + 1
    precisions = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precisions) / n_pos


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney statistic, ties worth one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel() != 0
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _per_class(fn, scores, labels, measure):
    scores, labels = _as_2d(scores, labels)
    per = np.array([fn(scores[:, k], labels[:, k]) for k in range(labels.shape[1])])
    return EvalResult(per, float(np.mean(per)), measure)


def mean_average_precision(scores, labels) -> EvalResult:
    return _per_class(average_precision, scores, labels, "map")


def mean_auc(scores, labels) -> EvalResult:
    return _per_class(auc, scores, labels, "auc")


def evaluate(scores, labels, measure: str) -> EvalResult:
    if measure == "accuracy":
        return accuracy(scores, labels)
    if measure == "map":
        return mean_average_precision(scores, labels)
    if measure == "auc":
        return mean_auc(scores, labels)
    raise DataError(f"unknown measure {measure!r}; expected one of {MEASURES}")
