"""Dataset loading, normalization and random generation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (S, n)
    labels: np.ndarray  # (S,)
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError(f"features {self.features.shape} and labels {self.labels.shape} disagree")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise ValueError("dataset contains NaN or inf")

    @property
    def S(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def check_classification(self):
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("classification labels must be -1 or +1")
        return self


def load_svmlight(path, n_features: int | None = None) -> Dataset:
    """Parse ``label idx:val ...`` lines with 1-indexed feature ids."""
    labels, rows = [], []
    width = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
                entries = {}
                for tok in parts[1:]:
                    idx, val = tok.split(":", 1)
                    j = int(idx)
                    if j < 1:
                        raise ValueError(f"feature index {j} < 1")
                    entries[j - 1] = float(val)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            labels.append(label)
            rows.append(entries)
            if entries:
                width = max(width, max(entries) + 1)
    if not rows:
        raise EmptyDatasetError(f"{path}: no samples")
    if n_features is not None:
        if n_features < width:
            raise ParseError(f"{path}: feature index {width} exceeds n_features={n_features}")
        width = n_features
    A = np.zeros((len(rows), width))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            A[i, j] = v
    return Dataset(A, np.array(labels), str(path))


def write_svmlight(ds: Dataset, path):
    with open(path, "w") as fh:
        for a, b in zip(ds.features, ds.labels):
            toks = [repr(float(b))] + [f"{j + 1}:{float(v)!r}" for j, v in enumerate(a) if v != 0]
            fh.write(" ".join(toks) + "\n")


def load_csv(path, delimiter=",") -> Dataset:
    """Dense rows, label in the last column."""
    try:
        M = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if M.size == 0:
        raise EmptyDatasetError(f"{path}: no samples")
    return Dataset(M[:, :-1], M[:, -1], str(path))


def load_dataset(path) -> Dataset:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return load_svmlight(path)


def zscore(ds: Dataset, floor: float = 1e-12) -> Dataset:
    """Per-feature standardization with the (S-1) sample standard deviation.

    Columns whose deviation is below ``floor`` are mapped to zero.
    """
    if ds.S < 2:
        raise ValueError("z-score needs at least two samples")
    X = ds.features
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    centered = X - mean
    safe = np.where(std > floor, std, 1.0)
    Z = np.where(std > floor, centered / safe, 0.0)
    return Dataset(Z, ds.labels.copy(), ds.provenance)


def gen_random_regression(n: int, S: int, seed: int = 0, floor: float = 1e-10) -> Dataset:
    """Uniform labels on [0, 1); standard-normal features min-max scaled per sample."""
    if n < 1 or S < 1:
        raise ValueError(f"need n >= 1 and S >= 1, got n={n}, S={S}")
    rng = np.random.default_rng(seed)
    b = rng.random(S)
    A = rng.standard_normal((n, S))
    lo = A.min(axis=0)
    span = np.maximum(A.max(axis=0) - lo, floor)
    A = (A - lo) / span
    return Dataset(A.T.copy(), b, f"gen_random_regression(n={n}, S={S}, seed={seed})")


def gen_random_classification(n: int, S: int, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Features as in :func:`gen_random_regression`; labels from a random hyperplane.

    ``b_j = sign((a_j - 1/2)^T w + noise * e_j)`` with ``w, e`` standard normal, ties to +1.
    """
    ds = gen_random_regression(n, S, seed)
    rng = np.random.default_rng([seed, 1])
    w = rng.standard_normal(n)
    score = (ds.features - 0.5) @ w + noise * rng.standard_normal(S)
    b = np.where(score >= 0, 1.0, -1.0)
    return Dataset(ds.features, b, f"gen_random_classification(n={n}, S={S}, seed={seed})")
