"""Synthetic instance generation, dataset readers and polynomial group expansion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, fields
from itertools import combinations
from pathlib import Path

import numpy as np

from .core import GroupPartition

# exponent pairs (a, b) -> column x_j^a * x_l^b for each feature pair j < l
DEFAULT_RECIPE = ((1, 1), (2, 1), (1, 2), (2, 0), (0, 2))


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    m: int = 500
    n: int = 2000
    group_size: int = 5
    k_active: int = 10
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.m <= 0 or self.n <= 0 or self.group_size <= 0:
            raise ValueError("m, n and group_size must be positive")
        if self.n % self.group_size:
            raise ValueError(f"n={self.n} is not divisible by group_size={self.group_size}")
        if not 0 <= self.k_active <= self.n // self.group_size:
            raise ValueError(f"k_active={self.k_active} exceeds the {self.n // self.group_size} groups")
        if self.m > self.n:
            raise ValueError("orthonormal rows need m <= n")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @classmethod
    def parse(cls, text: str, **overrides) -> "SyntheticSpec":
        """Parse ``"m=500,n=2000,seed=3"`` (commas or newlines separate pairs)."""
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for item in text.replace("\n", ",").split(","):
            item = item.split("#", 1)[0].strip()
            if not item:
                continue
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or key not in kinds:
                raise ValueError(f"bad synthetic setting {item!r}; keys are {sorted(kinds)}")
            values[key] = float(val) if kinds[key] == "float" else int(val)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "SyntheticSpec":
        return cls.parse(Path(path).read_text(encoding="utf-8"), **overrides)


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] | None = None
    task: str = "regression"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError(f"X has shape {self.X.shape} but y has {self.y.size} entries")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")

    def signed_labels(self) -> np.ndarray:
        """Two-class labels mapped to -1 / +1 (the smaller label becomes -1)."""
        classes = np.unique(self.y)
        if classes.size != 2:
            raise ValueError(f"expected two classes, found {classes.size}")
        return np.where(self.y == classes[1], 1.0, -1.0)


def generate_synthetic(spec: SyntheticSpec):
    """Return ``(A, y, x_true, partition)`` with ``A A^T = I``.

    ``A`` is the row-orthonormalised version of an ``m x n`` standard Gaussian
    draw; ``x_true`` has ``k_active`` standard-Gaussian groups chosen uniformly.
    """
    rng = np.random.default_rng(spec.seed)
    G = rng.standard_normal((spec.m, spec.n))
    Q, R = np.linalg.qr(G.T)
    # fix the sign ambiguity so the factor is a deterministic function of G
    Q *= np.where(np.diag(R) < 0, -1.0, 1.0)
    A = np.asfortranarray(Q.T)
    d = spec.n // spec.group_size
    x_true = np.zeros(spec.n)
    for i in rng.choice(d, size=spec.k_active, replace=False):
        x_true[i * spec.group_size:(i + 1) * spec.group_size] = rng.standard_normal(spec.group_size)
    noise = rng.standard_normal(spec.m) * spec.noise_std if spec.noise_std > 0 else np.zeros(spec.m)
    y = A @ x_true + noise
    return A, y, x_true, GroupPartition.contiguous_blocks(spec.n, spec.group_size)


def read_libsvm(path, n_features: int | None = None, task: str = "regression") -> Dataset:
    """Read ``label idx:val ...`` lines with 1-based feature indices."""
    labels, rows = [], []
    width = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
                entries = {}
                for tok in parts[1:]:
                    idx, val = tok.split(":")
                    j = int(idx)
                    if j < 1:
                        raise ValueError(f"feature index {j} is not 1-based")
                    entries[j - 1] = float(val)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed line ({exc})") from None
            labels.append(label)
            rows.append(entries)
            if entries:
                width = max(width, max(entries) + 1)
    if not rows:
        raise DataFormatError(f"{path}: no samples")
    if n_features is not None:
        if n_features < width:
            raise DataFormatError(f"{path}: feature index {width} exceeds n_features={n_features}")
        width = n_features
    X = np.zeros((len(rows), width))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            X[i, j] = v
    return Dataset(X, np.array(labels), task=task)


def write_libsvm(path, X, y) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(np.asarray(y, dtype=float), X):
            nz = np.flatnonzero(row)
            fields_ = " ".join(f"{j + 1}:{float(row[j])!r}" for j in nz)
            fh.write(f"{float(label)!r} {fields_}".rstrip() + "\n")


def read_csv(path, target_column: str, task: str = "regression") -> Dataset:
    """Read a headed CSV; every non-target column must be numeric."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataFormatError(f"{path}: no column named {target_column!r} (have {header})")
        t = header.index(target_column)
        names = [h for j, h in enumerate(header) if j != t]
        X, y = [], []
        for rowno, row in enumerate(reader, 2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {rowno}, column {header[j]!r}: non-numeric value {cell!r}") from None
            y.append(vals.pop(t))
            X.append(vals)
    if not X:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(X), np.array(y), feature_names=names, task=task)


# centered norm below this fraction of the raw norm counts as constant
_FLAT_RTOL = 1e-10


def _standardize_columns(M: np.ndarray) -> np.ndarray:
    raw = np.linalg.norm(M, axis=0)
    M = M - M.mean(axis=0)
    norms = np.linalg.norm(M, axis=0)
    flat = norms <= _FLAT_RTOL * raw
    if flat.any():
        warnings.warn(f"{int(flat.sum())} expanded column(s) are constant and left at zero", stacklevel=3)
    return np.where(flat, 0.0, M / np.where(flat, 1.0, norms))


def polynomial_group_expand(dataset: Dataset, degree: int = 3, recipe=DEFAULT_RECIPE):
    """Expand each raw feature pair into one group of monomials.

    Each pair ``j < l`` contributes the columns ``x_j^a x_l^b`` for every
    ``(a, b)`` in ``recipe`` with ``a + b <= degree``. Raw features are
    standardized first and zero-variance features are dropped with a warning.
    Expanded columns are centered and scaled to unit l2 norm.

    Returns ``(A, partition)``.
    """
    if degree < 2:
        raise ValueError("degree must be at least 2")
    terms = [(a, b) for a, b in recipe if a + b <= degree]
    if not terms:
        raise ValueError("recipe has no monomial within the requested degree")
    X = dataset.X
    std = X.std(axis=0)
    const = std <= _FLAT_RTOL * np.abs(X).max(axis=0)
    if const.any():
        names = dataset.feature_names or [str(j) for j in range(X.shape[1])]
        dropped = [names[j] for j in np.flatnonzero(const)]
        warnings.warn(f"dropping constant feature(s) {dropped}", stacklevel=2)
    Z = (X[:, ~const] - X[:, ~const].mean(axis=0)) / std[~const]
    f = Z.shape[1]
    if f < 2:
        raise ValueError("need at least two non-constant features to form pairs")
    n_pairs = math.comb(f, 2)
    A = np.empty((Z.shape[0], n_pairs * len(terms)), order="F")
    col = 0
    for j, l in combinations(range(f), 2):
        for a, b in terms:
            A[:, col] = Z[:, j] ** a * Z[:, l] ** b
            col += 1
    A = np.asfortranarray(_standardize_columns(A))
    return A, GroupPartition.contiguous_blocks(A.shape[1], len(terms))
