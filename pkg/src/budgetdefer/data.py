"""Sparse-format dataset loading, feature normalization and train/test splits.

Labels are stored 0-based (``0 .. n_classes - 1``); ``Dataset.label_values``
keeps the original label of each index so results can be reported in the
file's own vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed line in a sparse-format file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = "dataset"
    label_values: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent shapes X{X.shape} y{y.shape}")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.label_values:
            object.__setattr__(self, "label_values", tuple(range(self.n_classes)))

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> Example:
        return Example(self.X[i], int(self.y[i]))

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def examples(self) -> list[Example]:
        return [self[i] for i in range(len(self))]

    def subset(self, index, name=None) -> "Dataset":
        index = np.asarray(index)
        return replace(self, X=self.X[index], y=self.y[index], name=name or self.name)


def _number(token: str, line_no, column) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r}", line_no, column) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", line_no, column)
    return value


def parse_sparse_line(line: str, line_no: int | None = None):
    """Parse ``"<label> <i1>:<v1> <i2>:<v2> ..."``.

    Returns ``(label, pairs)`` where ``pairs`` is a list of ``(index, value)``
    with the file's 1-based indices. Indices must be strictly increasing.
    Trailing ``# comment`` text is ignored.
    """
    body = line.split("#", 1)[0].rstrip("\r\n")
    tokens = []
    pos = 0
    for tok in body.split():
        pos = body.index(tok, pos)
        tokens.append((tok, pos + 1))
        pos += len(tok)
    if not tokens:
        raise ParseError("empty line", line_no, 1)

    label_tok, col = tokens[0]
    raw = _number(label_tok, line_no, col)
    if raw != int(raw):
        raise ParseError(f"label {label_tok!r} is not an integer", line_no, col)
    label = int(raw)

    pairs = []
    last = 0
    for tok, col in tokens[1:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep or not idx_s or not val_s:
            raise ParseError(f"malformed token {tok!r}", line_no, col)
        try:
            idx = int(idx_s)
        except ValueError:
            raise ParseError(f"non-integer index {idx_s!r}", line_no, col) from None
        if idx < 1:
            raise ParseError(f"index {idx} is not 1-based", line_no, col)
        if idx <= last:
            raise ParseError(f"index {idx} does not increase (previous {last})", line_no, col)
        pairs.append((idx, _number(val_s, line_no, col + len(idx_s) + 1)))
        last = idx
    return label, pairs


def format_sparse_line(label: int, pairs: Sequence[tuple[int, float]]) -> str:
    """Inverse of :func:`parse_sparse_line` (values written with ``repr``)."""
    return " ".join([str(int(label))] + [f"{int(i)}:{float(v)!r}" for i, v in pairs])


def load_dataset(path, n_features: int | None = None, max_rows: int | None = None,
                 seed: int = 0, name: str | None = None) -> Dataset:
    """Read a sparse-format file into a dense :class:`Dataset`.

    Parameters
    ----------
    path : path-like
    n_features : int, optional
        Width of the dense matrix. Inferred from the largest index when omitted.
    max_rows : int, optional
        Keep a uniform random subsample of this many rows (drawn with ``seed``).
    """
    path = Path(path)
    labels, rows = [], []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.split("#", 1)[0].strip():
                continue
            label, pairs = parse_sparse_line(line, line_no)
            labels.append(label)
            rows.append(pairs)
    if not rows:
        raise ValueError(f"{path}: no examples")

    max_index = max((pairs[-1][0] for pairs in rows if pairs), default=0)
    if n_features is None:
        n_features = max(max_index, 1)
    elif max_index > n_features:
        raise ValueError(f"{path}: index {max_index} exceeds n_features={n_features}")

    if max_rows is not None and max_rows < len(rows):
        keep = np.sort(np.random.default_rng(seed).choice(len(rows), size=max_rows, replace=False))
        rows = [rows[i] for i in keep]
        labels = [labels[i] for i in keep]

    X = np.zeros((len(rows), n_features))
    for r, pairs in enumerate(rows):
        for i, v in pairs:
            X[r, i - 1] = v
    values, y = np.unique(np.asarray(labels), return_inverse=True)
    return Dataset(X, y, n_classes=len(values), name=name or path.stem,
                   label_values=tuple(int(v) for v in values))


@dataclass(frozen=True)
class Standardizer:
    """Per-coordinate centering/scaling followed by a global norm scale."""

    mean: np.ndarray
    std: np.ndarray
    scale: float

    def apply(self, ds: Dataset) -> Dataset:
        centered = ds.X - self.mean
        safe = np.where(self.std > 0, self.std, 1.0)
        Z = np.where(self.std > 0, centered / safe, 0.0)
        return replace(ds, X=Z / self.scale)


def fit_standardizer(ds: Dataset) -> Standardizer:
    if len(ds) == 0:
        raise ValueError("cannot standardize an empty dataset")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    # constant columns: tiny float residue around the mean is not real variance
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
    safe = np.where(std > 0, std, 1.0)
    Z = np.where(std > 0, (ds.X - mean) / safe, 0.0)
    max_norm = float(np.sqrt((Z ** 2).sum(axis=1)).max())
    return Standardizer(mean, std, max_norm if max_norm > 0 else 1.0)


def standardize_features(ds: Dataset) -> Dataset:
    """Zero mean / unit variance per coordinate, then max row norm scaled to 1."""
    return fit_standardizer(ds).apply(ds)


def split_train_test(ds: Dataset, test_fraction: float, seed: int):
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"split of {n} examples at {test_fraction} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return (ds.subset(perm[n_test:], name=f"{ds.name}-train"),
            ds.subset(perm[:n_test], name=f"{ds.name}-test"))


def prepare_split(ds: Dataset, test_fraction: float, seed: int):
    """Split, then normalize both parts with statistics fitted on the train part."""
    train, test = split_train_test(ds, test_fraction, seed)
    st = fit_standardizer(train)
    return st.apply(train), st.apply(test)
