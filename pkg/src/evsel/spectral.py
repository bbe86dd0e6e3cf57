"""Feature banks, label matrices and the cached eigenbasis of ``X X^T``.

Everything downstream (evidence, weights, cross-validation) works from one
:class:`EigenBasis` per feature matrix.  Building it costs one ``D x D``
symmetric eigendecomposition; afterwards every regularization value and
every class is handled in ``O(D)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateClassError, NumericalError

#: Relative threshold below which eigenvalues are clamped to zero.
EIG_CLAMP = 1e-12

_counter_lock = threading.Lock()
_eigh_calls = 0


def eigh_calls() -> int:
    """Number of eigendecompositions performed by :func:`eigh` so far."""
    return _eigh_calls


def _bump():
    global _eigh_calls
    with _counter_lock:
        _eigh_calls += 1


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureBank:
    """A ``D x N`` feature matrix; column ``n`` is the feature vector of sample ``n``."""

    name: str
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"bank {self.name!r}: expected a 2-D matrix, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"bank {self.name!r}: empty matrix {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError(f"bank {self.name!r}: non-finite entries")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def columns(self, idx) -> FeatureBank:
        """Sub-bank restricted to the samples ``idx``."""
        return FeatureBank(self.name, self.data[:, np.asarray(idx)])


@dataclass(frozen=True)
class LabelMatrix:
    """``N x K`` binary indicator targets."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"labels: expected a non-empty N x K matrix, got shape {data.shape}")
        bad = ~np.isin(data, (0, 1))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataError(f"labels: entry at (row {r}, col {c}) is {data[r, c]!r}, expected 0 or 1")
        arr = data.astype(np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def rows(self, idx) -> LabelMatrix:
        return LabelMatrix(self.data[np.asarray(idx)])

    def is_one_hot(self) -> bool:
        return bool(np.all(self.data.sum(axis=1) == 1))

    def check_nondegenerate(self):
        """Raise unless every class has at least one positive and one negative."""
        pos = self.data.sum(axis=0)
        for k, p in enumerate(pos):
            if p == 0 or p == self.n:
                kind = "no positive" if p == 0 else "no negative"
                raise DegenerateClassError(f"class {k} has {kind} examples")


@dataclass(frozen=True)
class EigenBasis:
    """Spectral cache of one feature matrix and its label columns.

    Attributes
    ----------
    u : (D, D) ndarray
        Eigenvectors of ``X X^T`` (columns), sign-canonicalized.
    s : (D,) ndarray
        Eigenvalues, descending, clamped at zero.
    h : (D, K) ndarray
        ``U^T X y^(k)`` per class.
    yty : (K,) ndarray
        ``y^(k)T y^(k)`` per class.
    """

    u: np.ndarray
    s: np.ndarray
    h: np.ndarray
    yty: np.ndarray
    n: int
    name: str = field(default="")

    @property
    def d(self) -> int:
        return self.s.shape[0]

    @property
    def k(self) -> int:
        return self.h.shape[1]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.s))

    def with_labels(self, x, y) -> EigenBasis:
        """Same eigenvectors, new targets ``y`` (``N x K``) for feature matrix ``x``."""
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        return EigenBasis(self.u, self.s, _readonly(self.u.T @ (x @ y)),
                          _readonly(np.einsum("nk,nk->k", y, y)), self.n, self.name)


def gram(bank: FeatureBank) -> np.ndarray:
    """Return the symmetrized Gram matrix ``X X^T``."""
    x = bank.data
    m = x @ x.T
    return (m + m.T) / 2.0


def canonical_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def eigh(m, name: str = ""):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Eigenvalues below ``EIG_CLAMP * s_max`` (including small negatives from
    round-off) are set to zero.

    Returns
    -------
    u : ndarray
        Orthonormal eigenvectors as columns.
    s : ndarray
        Non-negative eigenvalues in descending order.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"eigh: expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"eigh: non-finite entries in Gram matrix of bank {name!r}")
    _bump()
    try:
        s, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for bank {name!r}: {exc}") from exc
    # stable so that tied eigenvalues keep LAPACK's order
    order = np.argsort(-s, kind="stable")
    s = s[order]
    u = u[:, order]
    smax = max(s[0], 0.0) if s.size else 0.0
    s[s < EIG_CLAMP * smax] = 0.0
    return canonical_signs(u), s


def build_basis(bank: FeatureBank, labels: LabelMatrix) -> EigenBasis:
    """One eigendecomposition plus projected targets for every class."""
    if bank.n != labels.n:
        raise DataError(f"bank {bank.name!r} has {bank.n} samples but labels have {labels.n}")
    u, s = eigh(gram(bank), bank.name)
    y = labels.data
    h = u.T @ (bank.data @ y)
    yty = np.einsum("nk,nk->k", y, y)
    return EigenBasis(_readonly(u), _readonly(s), _readonly(h), _readonly(yty), bank.n, bank.name)
