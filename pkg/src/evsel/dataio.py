"""File formats, manifests, normalization and seeded synthetic data.

Binary layouts (all integers and floats little-endian):

``FBNK``  magic, version u32, D u64, N u64, D*N f64 row-major
``LBLS``  magic, version u32, N u64, K u64, N*K u8 in {0, 1} row-major

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64).
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .metrics import MEASURES
from .spectral import FeatureBank, LabelMatrix

log = logging.getLogger(__name__)

FBNK_MAGIC = b"FBNK"
LBLS_MAGIC = b"LBLS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

MODES = ("single_label", "multi_label")


# -- binary formats ---------------------------------------------------------

def bank_to_bytes(bank: FeatureBank) -> bytes:
    return _HEADER.pack(FBNK_MAGIC, FORMAT_VERSION, bank.d, bank.n) + bank.data.astype("<f8").tobytes(order="C")


def bank_from_bytes(buf: bytes, name: str, path=None) -> FeatureBank:
    d, n = _read_header(buf, FBNK_MAGIC, path)
    need = _HEADER.size + 8 * d * n
    if len(buf) < need:
        raise FormatError(f"truncated FBNK payload: expected {need} bytes, got {len(buf)}", path, len(buf))
    if len(buf) > need:
        raise FormatError(f"trailing bytes after FBNK payload ({len(buf) - need})", path, need)
    data = np.frombuffer(buf, "<f8", d * n, _HEADER.size).reshape(d, n).astype(np.float64)
    bad = ~np.isfinite(data)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FormatError(f"non-finite value at (row {r}, col {c})", path, _HEADER.size + 8 * (r * n + c))
    return FeatureBank(name, data)


def labels_to_bytes(labels: LabelMatrix) -> bytes:
    return _HEADER.pack(LBLS_MAGIC, FORMAT_VERSION, labels.n, labels.k) + labels.data.astype(np.uint8).tobytes(order="C")


def labels_from_bytes(buf: bytes, path=None) -> LabelMatrix:
    n, k = _read_header(buf, LBLS_MAGIC, path)
    need = _HEADER.size + n * k
    if len(buf) != need:
        kind = "truncated" if len(buf) < need else "oversized"
        raise FormatError(f"{kind} LBLS payload: expected {need} bytes, got {len(buf)}", path, min(len(buf), need))
    data = np.frombuffer(buf, np.uint8, n * k, _HEADER.size).reshape(n, k)
    bad = data > 1
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FormatError(f"label byte {data[r, c]} at (row {r}, col {c}) is not 0 or 1",
                          path, _HEADER.size + r * k + c)
    return LabelMatrix(data)


def _read_header(buf, magic, path):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", path, len(buf))
    got, version, a, b = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", path, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    return a, b


def write_bank(path, bank: FeatureBank):
    Path(path).write_bytes(bank_to_bytes(bank))


def read_bank(path, name: str | None = None) -> FeatureBank:
    path = Path(path)
    return bank_from_bytes(path.read_bytes(), name or path.stem, path)


def write_labels(path, labels: LabelMatrix):
    Path(path).write_bytes(labels_to_bytes(labels))


def read_labels(path) -> LabelMatrix:
    path = Path(path)
    return labels_from_bytes(path.read_bytes(), path)


def read_bank_csv(path, name: str | None = None, samples_as_rows: bool = False) -> FeatureBank:
    """Read a numeric CSV matrix; a non-numeric first row is taken as a header.

    By default rows are feature dimensions and columns samples, matching
    ``FBNK``.
    """
    path = Path(path)
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if rows and not _numeric(rows[0]):
        rows = rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV cell: {exc}", path) from exc
    if data.ndim != 2:
        raise FormatError("ragged CSV rows", path)
    if samples_as_rows:
        data = data.T
    return FeatureBank(name or path.stem, data)


def _numeric(row):
    try:
        [float(v) for v in row]
    except ValueError:
        return False
    return True


# -- manifests --------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    """Dataset description loaded from JSON.

    Schema::

        {
          "task": "voc07",
          "banks": [{"name": "G_I", "path": "gi.fbnk"}, ...],
          "labels": "labels.lbls",
          "mode": "single_label" | "multi_label",
          "measure": "accuracy" | "map" | "auc",
          "split": {"train": [0, 1, ...], "test": [...]}      # optional
        }

    Relative paths are resolved against the manifest's directory.  Banks may
    also be CSV files (``.csv`` suffix, rows = feature dimensions).
    """

    task: str
    banks: tuple  # of (name, Path)
    labels: Path
    mode: str = "single_label"
    measure: str = "accuracy"
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    root: Path = field(default=Path("."))

    @property
    def bank_names(self):
        return [name for name, _ in self.banks]

    def load_bank(self, name: str) -> FeatureBank:
        for bname, p in self.banks:
            if bname == name:
                if p.suffix.lower() == ".csv":
                    return read_bank_csv(p, bname)
                return read_bank(p, bname)
        raise DataError(f"unknown bank {name!r}; manifest has {self.bank_names}")

    def load_banks(self):
        return [self.load_bank(name) for name in self.bank_names]

    def load_labels(self) -> LabelMatrix:
        return read_labels(self.labels)

    def split_indices(self, n: int):
        """(train, test) index arrays; both are everything when no split is given."""
        if self.train_idx is None:
            idx = np.arange(n)
            return idx, idx
        return self.train_idx, self.test_idx


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a manifest, including every file it references."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}", path) from exc
    if not isinstance(doc, dict):
        raise FormatError("manifest must be a JSON object", path)
    root = path.parent
    banks_doc = doc.get("banks") or []
    if not banks_doc:
        raise DataError(f"manifest {path} lists no feature banks")
    banks = []
    for entry in banks_doc:
        try:
            name, p = str(entry["name"]), root / entry["path"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bank entry {entry!r} needs 'name' and 'path'", path) from exc
        banks.append((name, p))
    names = [b[0] for b in banks]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate bank names in {path}: {names}")
    if "labels" not in doc:
        raise DataError(f"manifest {path} has no 'labels' entry")
    labels = root / doc["labels"]
    for p in [labels] + [b[1] for b in banks]:
        if not p.is_file():
            raise DataError(f"manifest {path} references missing file {p}")
    mode = doc.get("mode", "single_label")
    measure = doc.get("measure", "accuracy")
    if mode not in MODES:
        raise DataError(f"unknown mode {mode!r}; expected one of {MODES}")
    if measure not in MEASURES:
        raise DataError(f"unknown measure {measure!r}; expected one of {MEASURES}")

    train_idx = test_idx = None
    split = doc.get("split")
    if split is not None:
        train_idx = np.asarray(split.get("train", []), dtype=np.int64)
        test_idx = np.asarray(split.get("test", []), dtype=np.int64)
        if train_idx.size == 0 or test_idx.size == 0:
            raise DataError("split needs non-empty 'train' and 'test' index lists")
        if np.intersect1d(train_idx, test_idx).size:
            raise DataError("train and test split indices overlap")
        n = _peek_label_count(labels)
        for nm, idx in (("train", train_idx), ("test", test_idx)):
            if idx.min() < 0 or idx.max() >= n:
                raise DataError(f"{nm} split index out of range [0, {n})")
    return DatasetManifest(
        task=str(doc.get("task", path.stem)),
        banks=tuple(banks),
        labels=labels,
        mode=mode,
        measure=measure,
        train_idx=train_idx,
        test_idx=test_idx,
        root=root,
    )


def _peek_label_count(path):
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
    return _read_header(head, LBLS_MAGIC, path)[0]


def write_manifest(path, task, banks, labels, mode="single_label", measure="accuracy", split=None):
    """Write a manifest; ``banks`` is a list of ``(name, relative path)``."""
    doc = {
        "task": task,
        "banks": [{"name": n, "path": str(p)} for n, p in banks],
        "labels": str(labels),
        "mode": mode,
        "measure": measure,
    }
    if split is not None:
        doc["split"] = {"train": [int(i) for i in split[0]], "test": [int(i) for i in split[1]]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# -- preprocessing ----------------------------------------------------------

def l2_normalize_columns(bank: FeatureBank) -> FeatureBank:
    """Scale every sample to unit Euclidean norm.

    Negative entries are allowed but counted and logged, since the
    fixed-point existence guarantee assumes nonnegative features.
    """
    x = bank.data
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0):
        raise DataError(f"bank {bank.name!r}: column {int(np.argmin(norms))} is all zero")
    n_neg = int(np.count_nonzero(x < 0))
    if n_neg:
        log.warning("bank %r: %d negative entries; nonnegativity assumption violated", bank.name, n_neg)
    return FeatureBank(bank.name, x / norms)


# -- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Settings for :func:`generate_synthetic`.

    ``noise_level`` is the probability that a sample's features are drawn
    around the prototype of a uniformly random class instead of its own;
    1.0 yields a bank independent of the labels.  ``jitter`` is the
    standard deviation of the additive feature noise.
    """

    n: int = 200
    d: int = 50
    k: int = 3
    noise_level: float = 0.0
    informative_fraction: float = 1.0
    seed: int = 0
    nonneg_l2: bool = True
    jitter: float = 0.1
    test_fraction: float = 0.5

    def __post_init__(self):
        if min(self.n, self.d, self.k) < 1:
            raise DataError("n, d, k must be positive")
        if self.noise_level < 0:
            raise DataError("noise_level must be >= 0")
        if not 0 < self.informative_fraction <= 1:
            raise DataError("informative_fraction must lie in (0, 1]")


def synthetic_labels(n: int, k: int, seed, min_per_class: int = 2) -> LabelMatrix:
    """Shuffled one-hot labels with every class represented at least ``min_per_class`` times."""
    if n < k * min_per_class:
        raise DataError(f"n={n} too small for {k} classes x {min_per_class} samples")
    rng = np.random.default_rng(seed)
    cls = np.concatenate([np.repeat(np.arange(k), min_per_class),
                          rng.integers(0, k, n - k * min_per_class)])
    rng.shuffle(cls)
    return LabelMatrix(np.eye(k, dtype=np.uint8)[cls])


def synthetic_bank(
    labels: LabelMatrix,
    d: int,
    *,
    noise_level: float = 0.0,
    informative_fraction: float = 1.0,
    informative_classes=None,
    jitter: float = 0.1,
    nonneg_l2: bool = True,
    seed=0,
    name: str = "synth",
) -> FeatureBank:
    """Features for fixed labels: class prototypes on the informative rows plus jitter.

    Classes outside ``informative_classes`` share one background prototype,
    so the bank only separates the listed classes from the rest.
    """
    rng = np.random.default_rng(seed)
    k, n = labels.k, labels.n
    truth = np.argmax(labels.data, axis=1)
    n_inf = max(1, int(round(informative_fraction * d)))
    if nonneg_l2:
        proto = rng.random((k, n_inf))
    else:
        proto = rng.standard_normal((k, n_inf))
    if informative_classes is not None:
        keep = np.zeros(k, bool)
        keep[list(informative_classes)] = True
        if (~keep).any():
            proto[~keep] = proto[~keep][0]
    flip = rng.random(n) < noise_level
    shown = np.where(flip, rng.integers(0, k, n), truth)
    x = jitter * rng.standard_normal((d, n))
    x[:n_inf] += proto[shown].T
    if nonneg_l2:
        x = np.abs(x)
        x[:, np.linalg.norm(x, axis=0) == 0] = 1.0
        x /= np.linalg.norm(x, axis=0)
    return FeatureBank(name, x)


def train_test_split(labels: LabelMatrix, test_fraction: float, seed):
    """Split stratified on each sample's first positive class.

    Every class keeps at least one training sample.
    """
    rng = np.random.default_rng(seed)
    key = np.argmax(labels.data, axis=1)
    train, test = [], []
    for c in np.unique(key):
        idx = rng.permutation(np.flatnonzero(key == c))
        n_test = min(int(round(test_fraction * idx.size)), idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def generate_synthetic(spec: SynthSpec):
    """Return ``(bank, labels, (train_idx, test_idx))`` for ``spec``."""
    seeds = np.random.SeedSequence(spec.seed).spawn(3)
    labels = synthetic_labels(spec.n, spec.k, seeds[0])
    bank = synthetic_bank(
        labels, spec.d,
        noise_level=spec.noise_level,
        informative_fraction=spec.informative_fraction,
        jitter=spec.jitter,
        nonneg_l2=spec.nonneg_l2,
        seed=seeds[1],
        name=f"synth{spec.seed}",
    )
    return bank, labels, train_test_split(labels, spec.test_fraction, seeds[2])
