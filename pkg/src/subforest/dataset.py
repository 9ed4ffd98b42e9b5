"""Training data: synthetic generators, CSV ingestion, train/test splitting.

Synthetic label rules (features uniform on [0,1]^d, standard Gaussian noise):

    cosine: y = 3 * cos(pi * (x1 + x2))
    xor:    y = 5 * (XOR(x1 > 0.6, x2 > 0.6) + XOR(x3 > 0.6, x4 > 0.6))
    and:    y = 10 * AND(x1 > 0.3, x2 > 0.3, x3 > 0.3, x4 > 0.3)

XOR and AND are 0/1-valued with strict inequalities. Dimensions beyond a
rule's arity are inactive noise features, still drawn uniformly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng

ARITY = {"cosine": 2, "xor": 4, "and": 4}


@dataclass(frozen=True)
class SyntheticSpec:
    """One of the three synthetic data-generating distributions."""

    kind: str
    d: int
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {sorted(ARITY)}")
        if self.d < ARITY[self.kind]:
            raise ValueError(f"kind {self.kind!r} needs d >= {ARITY[self.kind]}, got d={self.d}")
        if not (self.noise_sd >= 0.0 and math.isfinite(self.noise_sd)):
            raise ValueError(f"noise_sd must be finite and >= 0, got {self.noise_sd}")


@dataclass(frozen=True)
class TrainingSet:
    """Immutable labeled sample; row order is the identity of each example."""

    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) float64
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        if x.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
        if x.shape[0] == 0:
            raise ValueError("empty dataset")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite feature value")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite label value")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        x.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def true_mean_batch(spec: SyntheticSpec, x: np.ndarray) -> np.ndarray:
    """Noise-free regression function E[Y | X = x] for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != spec.d:
        raise ValueError(f"expected {spec.d} features, got {x.shape[1]}")
    if spec.kind == "cosine":
        return 3.0 * np.cos(np.pi * (x[:, 0] + x[:, 1]))
    if spec.kind == "xor":
        a = (x[:, 0] > 0.6) ^ (x[:, 1] > 0.6)
        b = (x[:, 2] > 0.6) ^ (x[:, 3] > 0.6)
        return 5.0 * (a.astype(np.float64) + b.astype(np.float64))
    a = (x[:, 0] > 0.3) & (x[:, 1] > 0.3) & (x[:, 2] > 0.3) & (x[:, 3] > 0.3)
    return 10.0 * a.astype(np.float64)


def true_mean(spec: SyntheticSpec, x) -> float:
    return float(true_mean_batch(spec, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def sample_synthetic(spec: SyntheticSpec, n: int, gen: np.random.Generator) -> TrainingSet:
    """Draw ``n`` examples from ``spec`` using an explicit stream."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x = gen.random((n, spec.d))
    y = true_mean_batch(spec, x)
    if spec.noise_sd > 0.0:
        y = y + spec.noise_sd * gen.standard_normal(n)
    return TrainingSet(x, y)


def gen_synthetic(spec: SyntheticSpec, n: int, seed: int) -> TrainingSet:
    """Draw ``n`` examples from ``spec``; identical seeds give identical bytes."""
    return sample_synthetic(spec, n, rng.stream(seed, rng.DATASET))


def load_csv(path, target_column=None, feature_columns=None) -> TrainingSet:
    """Read a headered numeric CSV into a TrainingSet, preserving row order.

    ``target_column`` is a header name or 0-based index (default: last
    column). ``feature_columns`` optionally restricts/reorders the features.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:  # tolerate leading '# key=value' provenance lines
            if row and row[0].lstrip().startswith("#"):
                continue
            header = row
            break
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"{path}: empty dataset (header only)")

    def col_index(col, what):
        if isinstance(col, int):
            if not 0 <= col < len(header):
                raise ValueError(f"{path}: {what} index {col} out of range for {len(header)} columns")
            return col
        if col not in header:
            raise ValueError(f"{path}: {what} {col!r} not in header {header}")
        return header.index(col)

    target = col_index(target_column if target_column is not None else len(header) - 1, "target column")
    if feature_columns is None:
        feat_idx = [i for i in range(len(header)) if i != target]
    else:
        feat_idx = [col_index(c, "feature column") for c in feature_columns]
        if target in feat_idx:
            raise ValueError(f"{path}: target column {header[target]!r} also selected as a feature")
    if not feat_idx:
        raise ValueError(f"{path}: no feature columns")

    def parse(cell, row_no, col):
        text = cell.strip()
        try:
            v = float(text)
        except ValueError:
            raise ValueError(f"{path}: row {row_no}, column {header[col]!r}: not numeric: {cell!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"{path}: row {row_no}, column {header[col]!r}: non-finite value {cell!r}")
        return v

    x = np.empty((len(rows), len(feat_idx)), dtype=np.float64)
    y = np.empty(len(rows), dtype=np.float64)
    for r, row in enumerate(rows):
        row_no = r + 2  # 1-based, after the header line
        if len(row) != len(header):
            raise ValueError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
        for j, c in enumerate(feat_idx):
            x[r, j] = parse(row[c], row_no, c)
        y[r] = parse(row[target], row_no, target)
    names = tuple(header[c] for c in feat_idx)
    return TrainingSet(x, y, feature_names=names)


def save_csv(ts: TrainingSet, path) -> None:
    """Write a TrainingSet as CSV with header x1..xd,y (bit round-trips)."""
    names = ts.feature_names or tuple(f"x{j + 1}" for j in range(ts.d))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["y"])
        for i in range(ts.n):
            writer.writerow([repr(float(v)) for v in ts.x[i]] + [repr(float(ts.y[i]))])


def split_train_test(ts: TrainingSet, test_fraction: float, seed: int) -> tuple[TrainingSet, TrainingSet]:
    """Disjoint uniform random split; test size is floor(n * test_fraction)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(math.floor(ts.n * test_fraction))
    if n_test < 1 or ts.n - n_test < 1:
        raise ValueError(f"split of n={ts.n} at fraction {test_fraction} leaves an empty side")
    perm = rng.stream(seed, rng.DATASET, 1).permutation(ts.n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    names = ts.feature_names
    return (
        TrainingSet(ts.x[train_idx], ts.y[train_idx], feature_names=names),
        TrainingSet(ts.x[test_idx], ts.y[test_idx], feature_names=names),
    )
