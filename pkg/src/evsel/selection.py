"""Evidence-based choice among feature banks and their concatenations.

Also hosts the k-fold grid-search baseline for the regularization value,
which reuses one eigendecomposition per fold across all grid points.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, EvselError
from .evidence import OptimOptions
from .lssvm import ClassifierModel, train
from .spectral import FeatureBank, LabelMatrix, build_basis

log = logging.getLogger(__name__)

#: Relative margin an evidence must clear to count as an increase.
EVIDENCE_REL_TOL = 1e-6
EXHAUSTIVE_LIMIT = 12
DEFAULT_GRID = 2.0 ** np.arange(-10, 11)


@dataclass(frozen=True)
class CandidateSet:
    banks: tuple
    labels: LabelMatrix

    def __post_init__(self):
        banks = tuple(self.banks)
        if not banks:
            raise DataError("candidate set is empty")
        names = [b.name for b in banks]
        if len(set(names)) != len(names):
            raise DataError(f"bank names are not unique: {names}")
        for b in banks:
            if b.n != self.labels.n:
                raise DataError(f"bank {b.name!r} has {b.n} samples, labels have {self.labels.n}")
        object.__setattr__(self, "banks", banks)

    @property
    def names(self):
        return [b.name for b in self.banks]

    def bank(self, name: str) -> FeatureBank:
        for b in self.banks:
            if b.name == name:
                return b
        raise DataError(f"unknown bank {name!r}; candidates are {self.names}")


class RankedBank(NamedTuple):
    name: str
    evidence: float
    model: ClassifierModel


class Decision(NamedTuple):
    name: str
    action: str  # "accept" | "reject"
    evidence_before: float | None
    evidence_after: float | None
    note: str = ""


@dataclass(frozen=True)
class EnsembleReport:
    decisions: tuple
    selected: tuple
    final_model: ClassifierModel
    strategy: str
    n_trainings: int = 0

    @property
    def evidence(self) -> float:
        return self.final_model.overall_evidence

    def to_json(self) -> str:
        doc = {
            "strategy": self.strategy,
            "selected": list(self.selected),
            "evidence": decimal12(self.evidence),
            "n_trainings": self.n_trainings,
            "decisions": [
                {
                    "name": d.name,
                    "action": d.action,
                    "evidence_before": decimal12(d.evidence_before),
                    "evidence_after": decimal12(d.evidence_after),
                    **({"note": d.note} if d.note else {}),
                }
                for d in self.decisions
            ],
            "lambdas": [decimal12(v) for v in self.final_model.lambdas],
        }
        return json.dumps(doc, indent=2) + "\n"


@dataclass(frozen=True)
class CvReport:
    grid: np.ndarray
    folds: int
    per_lambda_scores: np.ndarray  # (G, K)
    chosen: np.ndarray  # (K,)
    fold_assignment_seed: int
    fold_of: np.ndarray = field(repr=False, default=None)
    decompositions: int = 0
    elapsed_ms: float = 0.0


def decimal12(x):
    """Decimal string with 12 significant digits (None passes through)."""
    return None if x is None else format(float(x), ".12g")


def order_by_evidence(evidences: dict) -> list:
    """Names sorted by descending evidence, ties by name."""
    return sorted(evidences, key=lambda name: (-evidences[name], name))


def _pmap(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _try_train(bank, labels, opts, accept_unconverged):
    try:
        return train(bank, labels, opts, accept_unconverged=accept_unconverged), None
    except EvselError as exc:
        log.warning("training on %r failed: %s", bank.name, exc)
        return None, f"{type(exc).__name__}: {exc}"


def rank_banks(cset: CandidateSet, opts: OptimOptions | None = None, *, workers: int = 1,
               accept_unconverged: bool = False):
    """Train on every bank and sort by overall evidence.

    Returns
    -------
    ranked : list of RankedBank
        Descending evidence, ties broken by name.
    failed : dict
        Bank name -> error message for banks that could not be trained.
    """
    outs = _pmap(lambda b: _try_train(b, cset.labels, opts, accept_unconverged), list(cset.banks), workers)
    models, failed = {}, {}
    for b, (model, err) in zip(cset.banks, outs):
        if model is None:
            failed[b.name] = err
        else:
            models[b.name] = model
    order = order_by_evidence({n: m.overall_evidence for n, m in models.items()})
    return [RankedBank(n, models[n].overall_evidence, models[n]) for n in order], failed


def concat_banks(cset: CandidateSet, names) -> FeatureBank:
    """Stack the named banks row-wise, in the given order."""
    names = list(names)
    if not names:
        raise DataError("cannot concatenate an empty bank list")
    banks = [cset.bank(n) for n in names]
    if len(banks) == 1:
        return banks[0]
    return FeatureBank("+".join(names), np.vstack([b.data for b in banks]))


def _canonical(cset, names):
    # one row order per subset, so equal subsets give bit-identical evidence
    return [n for n in cset.names if n in set(names)]


def _increases(after, before, rel_tol):
    return after > before + rel_tol * abs(before)


def greedy_ensemble(cset: CandidateSet, opts: OptimOptions | None = None, *, rel_tol: float = EVIDENCE_REL_TOL,
                    workers: int = 1, accept_unconverged: bool = False, ranking=None) -> EnsembleReport:
    """Forward selection by overall evidence.

    Candidates are visited in order of their standalone evidence.  The best
    single bank is always kept; each further bank is added to the current
    selection and kept only if the retrained model's evidence rises by more
    than ``rel_tol`` (relative).  Selected banks are concatenated in
    candidate-set order.
    """
    if ranking is None:
        ranking, failed = rank_banks(cset, opts, workers=workers, accept_unconverged=accept_unconverged)
    else:
        failed = {}
    n_train = len(cset.banks)
    decisions = [Decision(name, "reject", None, None, f"standalone training failed: {err}")
                 for name, err in sorted(failed.items())]
    if not ranking:
        raise DataError("no candidate bank could be trained")
    best = ranking[0]
    selected = [best.name]
    model = best.model
    decisions.append(Decision(best.name, "accept", None, best.evidence, "best single bank"))
    for cand in ranking[1:]:
        trial = concat_banks(cset, _canonical(cset, selected + [cand.name]))
        new_model, err = _try_train(trial, cset.labels, opts, accept_unconverged)
        n_train += 1
        before = model.overall_evidence
        if new_model is None:
            decisions.append(Decision(cand.name, "reject", before, None, err))
            continue
        after = new_model.overall_evidence
        if _increases(after, before, rel_tol):
            selected = _canonical(cset, selected + [cand.name])
            model = new_model
            decisions.append(Decision(cand.name, "accept", before, after))
        else:
            decisions.append(Decision(cand.name, "reject", before, after))
    return EnsembleReport(tuple(decisions), tuple(selected), model, "greedy", n_train)


def exhaustive_ensemble(cset: CandidateSet, opts: OptimOptions | None = None, *, limit: int = EXHAUSTIVE_LIMIT,
                        workers: int = 1, accept_unconverged: bool = False) -> EnsembleReport:
    """Train on every non-empty subset and keep the one with maximum evidence.

    Ties go to the smaller subset, then to the lexicographically smaller
    sorted name tuple.  Subsets are concatenated in candidate-set order.
    """
    m = len(cset.banks)
    if m > limit:
        raise DataError(f"{m} banks exceed the exhaustive-search limit of {limit} ({2 ** m - 1} trainings)")
    subsets = [c for r in range(1, m + 1) for c in itertools.combinations(cset.names, r)]
    outs = _pmap(lambda s: _try_train(concat_banks(cset, s), cset.labels, opts, accept_unconverged),
                 subsets, workers)
    best_key, best = None, None
    for subset, (model, _) in zip(subsets, outs):
        if model is None:
            continue
        key = (-model.overall_evidence, len(subset), tuple(sorted(subset)))
        if best_key is None or key < best_key:
            best_key, best = key, (subset, model)
    if best is None:
        raise DataError("no subset could be trained")
    decisions = []
    for subset, (model, err) in zip(subsets, outs):
        name = "+".join(subset)
        ev = None if model is None else model.overall_evidence
        decisions.append(Decision(name, "accept" if subset == best[0] else "reject", None, ev, err or ""))
    return EnsembleReport(tuple(decisions), tuple(best[0]), best[1], "exhaustive", len(subsets))


def single_best(cset: CandidateSet, opts: OptimOptions | None = None, **kw) -> EnsembleReport:
    ranking, failed = rank_banks(cset, opts, **kw)
    if not ranking:
        raise DataError("no candidate bank could be trained")
    decisions = [Decision(r.name, "accept" if i == 0 else "reject", None, r.evidence)
                 for i, r in enumerate(ranking)]
    decisions += [Decision(n, "reject", None, None, err) for n, err in sorted(failed.items())]
    return EnsembleReport(tuple(decisions), (ranking[0].name,), ranking[0].model, "single_best", len(cset.banks))


# -- cross-validation baseline ----------------------------------------------

def fold_assignment(labels: LabelMatrix, folds: int, seed) -> np.ndarray:
    """Fold index per sample: seeded shuffle, then contiguous blocks per stratum.

    The stratum of a sample is its first positive class (rows without any
    positive form their own stratum).
    """
    y = labels.data
    key = np.where(y.any(axis=1), np.argmax(y, axis=1), labels.k)
    perm = np.random.default_rng(seed).permutation(labels.n)
    fold_of = np.empty(labels.n, dtype=np.int64)
    offset = 0
    for c in np.unique(key):
        members = perm[key[perm] == c]
        for f, block in enumerate(np.array_split(members, folds)):
            fold_of[block] = (f + offset) % folds
        offset += len(members)  # rotate so small strata do not all land in fold 0
    return fold_of


def _balanced_accuracy(scores, y):
    pos, neg = y == 1, y == 0
    if not pos.any() or not neg.any():
        return np.nan
    pred = scores >= 0.5
    return 0.5 * (np.mean(pred[pos]) + np.mean(~pred[neg]))


def cv_grid_search(bank: FeatureBank, labels: LabelMatrix, grid=None, folds: int = 5, seed: int = 0,
                   mode: str | None = None) -> CvReport:
    """k-fold grid search over the regularization value.

    ``mode`` is ``"single_label"`` (score = argmax accuracy, shared by all
    classes) or ``"multi_label"`` (per-class balanced accuracy at threshold
    0.5); by default it is inferred from whether ``labels`` are one-hot.
    The chosen value per class is the first grid point with the best mean
    validation score.
    """
    grid = np.asarray(DEFAULT_GRID if grid is None else grid, dtype=np.float64).ravel()
    if grid.size == 0 or np.any(~(grid > 0)):
        raise DataError("grid must be a non-empty vector of positive values")
    if folds < 2 or labels.n < folds:
        raise DataError(f"need 2 <= folds <= N, got folds={folds}, N={labels.n}")
    if bank.n != labels.n:
        raise DataError(f"bank {bank.name!r} has {bank.n} samples, labels have {labels.n}")
    mode = mode or ("single_label" if labels.is_one_hot() else "multi_label")
    t0 = time.perf_counter()
    fold_of = fold_assignment(labels, folds, seed)
    k = labels.k
    fold_scores = np.full((folds, grid.size, k), np.nan)
    decomps = 0
    for f in range(folds):
        tr, va = np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)
        if va.size == 0:
            continue
        basis = build_basis(bank.columns(tr), labels.rows(tr))
        decomps += 1
        proj = bank.data[:, va].T @ basis.u  # (Nva, D)
        y_va = labels.data[va]
        for g, lam in enumerate(grid):
            scores = proj @ (basis.h / (basis.s[:, None] + lam))
            if mode == "single_label":
                fold_scores[f, g, :] = np.mean(np.argmax(scores, axis=1) == np.argmax(y_va, axis=1))
            else:
                fold_scores[f, g, :] = [_balanced_accuracy(scores[:, c], y_va[:, c]) for c in range(k)]
    missing = np.all(np.isnan(fold_scores[:, 0, :]), axis=0)
    partial = np.any(np.isnan(fold_scores[:, 0, :]), axis=0) & ~missing
    if partial.any():
        warnings.warn(f"classes {np.flatnonzero(partial).tolist()} missing from some validation folds; "
                      "scored on the remaining folds", RuntimeWarning, stacklevel=2)
    if missing.any():
        raise DataError(f"classes {np.flatnonzero(missing).tolist()} cannot be validated in any fold")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_lambda = np.nanmean(fold_scores, axis=0)
    chosen = grid[np.argmax(per_lambda, axis=0)]
    return CvReport(grid=grid, folds=folds, per_lambda_scores=per_lambda, chosen=chosen,
                    fold_assignment_seed=seed, fold_of=fold_of, decompositions=decomps,
                    elapsed_ms=(time.perf_counter() - t0) * 1e3)
