"""Linear LS-SVM (one-vs-rest ridge) with per-class evidence-tuned regularization."""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DataError, FormatError
from .evidence import OptimOptions, log_evidence_1d, optimize_lambda
from .spectral import EigenBasis, FeatureBank, LabelMatrix, build_basis

log = logging.getLogger(__name__)

BMDL_MAGIC = b"BMDL"
BMDL_VERSION = 1


@dataclass(frozen=True)
class ClassifierModel:
    weights: np.ndarray  # (D, K)
    lambdas: np.ndarray  # (K,)
    overall_evidence: float
    bank_signature: str
    per_class: tuple = field(default=(), repr=False)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    def to_bytes(self) -> bytes:
        sig = self.bank_signature.encode("utf-8")
        parts = [
            BMDL_MAGIC,
            struct.pack("<IQQ", BMDL_VERSION, self.d, self.k),
            np.asarray(self.lambdas, dtype="<f8").tobytes(),
            np.asarray(self.weights, dtype="<f8").tobytes(order="F"),
            struct.pack("<d", self.overall_evidence),
            struct.pack("<Q", len(sig)),
            sig,
        ]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, path=None) -> ClassifierModel:
        if len(buf) < 24 or buf[:4] != BMDL_MAGIC:
            raise FormatError("not a BMDL model file (bad magic)", path, 0)
        version, d, k = struct.unpack_from("<IQQ", buf, 4)
        if version != BMDL_VERSION:
            raise FormatError(f"unsupported BMDL version {version}", path, 4)
        off = 24
        need = off + 8 * k + 8 * d * k + 8 + 8
        if len(buf) < need:
            raise FormatError(f"truncated BMDL file: need {need} bytes, have {len(buf)}", path, len(buf))
        lambdas = np.frombuffer(buf, "<f8", k, off).astype(np.float64)
        off += 8 * k
        weights = np.frombuffer(buf, "<f8", d * k, off).astype(np.float64).reshape((d, k), order="F")
        off += 8 * d * k
        (overall,) = struct.unpack_from("<d", buf, off)
        (slen,) = struct.unpack_from("<Q", buf, off + 8)
        off += 16
        if len(buf) != off + slen:
            raise FormatError("BMDL signature length does not match file size", path, off - 8)
        sig = buf[off:off + slen].decode("utf-8")
        return cls(weights=weights, lambdas=lambdas, overall_evidence=overall, bank_signature=sig)


def solve_weights(basis: EigenBasis, k: int, lam: float) -> np.ndarray:
    """Ridge solution ``U (S + lam I)^-1 h`` for class ``k``."""
    if not lam > 0:
        raise DataError(f"lambda must be positive, got {lam}")
    return basis.u @ (basis.h[:, k] / (basis.s + lam))


def overall_evidence(per_class, accept_unconverged: bool = False) -> float:
    """Sum of per-class maximized log evidences, in ascending class order."""
    results = sorted(per_class, key=lambda r: r.class_index)
    if not results:
        raise DataError("overall_evidence of an empty result list")
    bad = [r.class_index for r in results if not r.converged]
    if bad and not accept_unconverged:
        raise ConvergenceError(f"classes {bad} did not converge")
    total = 0.0
    for r in results:
        total += r.log_evidence
    return total


def train(
    bank: FeatureBank,
    labels: LabelMatrix,
    opts: OptimOptions | None = None,
    *,
    accept_unconverged: bool = False,
    workers: int = 1,
    basis: EigenBasis | None = None,
) -> ClassifierModel:
    """Fit one evidence-tuned ridge classifier per label column.

    Parameters
    ----------
    bank, labels
        Training features (``D x N``) and targets (``N x K``).
    opts
        Optimizer settings shared by all classes.
    accept_unconverged
        Keep classes whose optimizer hit ``max_iters`` (logged) instead of
        raising :class:`ConvergenceError`.
    workers
        Thread count for the per-class optimizations.  Results do not
        depend on it.
    basis
        A prebuilt basis for ``(bank, labels)``, to skip the decomposition.
    """
    if bank.n != labels.n:
        raise DataError(f"bank {bank.name!r} has {bank.n} samples, labels have {labels.n}")
    labels.check_nondegenerate()
    opts = opts or OptimOptions()
    basis = basis or build_basis(bank, labels)

    def run(k):
        return optimize_lambda(basis, k, opts)

    if workers > 1 and labels.k > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, range(labels.k)))
    else:
        results = [run(k) for k in range(labels.k)]

    for r in results:
        if not r.converged:
            if not accept_unconverged:
                raise ConvergenceError(
                    f"bank {bank.name!r}, class {r.class_index}: no convergence after {r.iterations} iterations"
                )
            log.warning("bank %r class %d: accepting unconverged lambda=%g", bank.name, r.class_index, r.lam)

    lambdas = np.array([r.lam for r in results])
    weights = basis.u @ (basis.h / (basis.s[:, None] + lambdas[None, :]))
    return ClassifierModel(
        weights=weights,
        lambdas=lambdas,
        overall_evidence=overall_evidence(results, accept_unconverged),
        bank_signature=bank.name,
        per_class=tuple(results),
    )


def fit_with_lambdas(bank: FeatureBank, labels: LabelMatrix, lambdas) -> ClassifierModel:
    """Ridge fit at given per-class regularization values (e.g. chosen by CV).

    ``overall_evidence`` is the summed profile log evidence at those values.
    """
    basis = build_basis(bank, labels)
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=np.float64), (labels.k,)).copy()
    if np.any(~(lambdas > 0)):
        raise DataError("lambdas must be positive")
    weights = basis.u @ (basis.h / (basis.s[:, None] + lambdas[None, :]))
    ev = 0.0
    for k in range(labels.k):
        ev += log_evidence_1d(basis, k, float(lambdas[k]))
    return ClassifierModel(weights=weights, lambdas=lambdas, overall_evidence=ev, bank_signature=bank.name)


def predict_scores(model: ClassifierModel, bank: FeatureBank) -> np.ndarray:
    """``N' x K`` raw scores ``x_n^T w^(k)``."""
    if bank.d != model.d:
        raise DataError(f"bank {bank.name!r} has D={bank.d}, model expects D={model.d}")
    return bank.data.T @ model.weights


def average_scores(scores) -> np.ndarray:
    """Element-wise mean of equally shaped score matrices."""
    scores = [np.asarray(s, dtype=np.float64) for s in scores]
    if not scores:
        raise DataError("average_scores of an empty sequence")
    shape = scores[0].shape
    for s in scores[1:]:
        if s.shape != shape:
            raise DataError(f"score shape mismatch: {s.shape} vs {shape}")
    return np.mean(np.stack(scores), axis=0)


def save_model(model: ClassifierModel, path):
    with open(path, "wb") as f:
        f.write(model.to_bytes())


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as f:
        return ClassifierModel.from_bytes(f.read(), path)
