"""Subsample draws without replacement and the honesty partition.

Subsets are drawn by partial Fisher-Yates over an index array, which makes
every size-s subset exactly equally likely. The inclusion counts N_i of a
draw satisfy E[N_i] = s/n and Cov(N_i, N_j) = -s(n-s) / (n^2 (n-1)) for
i != j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SubsampleDraw:
    """A sorted set of s distinct training indices out of n."""

    indices: np.ndarray  # sorted int64, distinct, in [0, n)
    n: int

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a subsample holds at least one index")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be sorted and distinct")
        if idx[0] < 0 or idx[-1] >= self.n:
            raise ValueError(f"indices out of range [0, {self.n})")
        object.__setattr__(self, "indices", idx)
        idx.setflags(write=False)

    @property
    def s(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class HonestyPartition:
    """Split of a subsample into structure and prediction index sets."""

    structure: np.ndarray  # sorted int64
    prediction: np.ndarray  # sorted int64, size >= ceil(s / 2)

    def __post_init__(self):
        st = np.ascontiguousarray(np.asarray(self.structure, dtype=np.int64))
        pr = np.ascontiguousarray(np.asarray(self.prediction, dtype=np.int64))
        if pr.size < 1:
            raise ValueError("prediction set must be non-empty")
        if np.intersect1d(st, pr).size:
            raise ValueError("structure and prediction sets overlap")
        s = st.size + pr.size
        if pr.size < -(-s // 2):
            raise ValueError("prediction set must hold at least half the subsample")
        object.__setattr__(self, "structure", st)
        object.__setattr__(self, "prediction", pr)
        st.setflags(write=False)
        pr.setflags(write=False)


def _choose_without_replacement(pool: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of ``pool`` by partial Fisher-Yates; returns sorted."""
    arr = pool.copy()
    n = arr.size
    # one vectorized draw of all swap targets keeps the stream usage fixed
    js = rng.integers(np.arange(k), n)
    for i in range(k):
        j = js[i]
        arr[i], arr[j] = arr[j], arr[i]
    return np.sort(arr[:k])


def draw_subsample(n: int, s: int, rng: np.random.Generator) -> SubsampleDraw:
    """Uniform draw of s out of n indices without replacement."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    return SubsampleDraw(_choose_without_replacement(np.arange(n, dtype=np.int64), s, rng), n)


def counts_vector(draw: SubsampleDraw) -> np.ndarray:
    """Length-n inclusion counts N with N_i = 1 iff i is in the draw."""
    counts = np.zeros(draw.n, dtype=np.int64)
    counts[draw.indices] = 1
    return counts


def honesty_partition(draw: SubsampleDraw, rng: np.random.Generator) -> HonestyPartition:
    """Uniform split of a draw into ceil(s/2) prediction + rest structure points."""
    s = draw.s
    if s < 2:
        raise ValueError(f"cannot partition a subsample of size {s}")
    n_pred = -(-s // 2)
    pred = _choose_without_replacement(draw.indices, n_pred, rng)
    struct = np.setdiff1d(draw.indices, pred, assume_unique=True)
    return HonestyPartition(structure=struct, prediction=pred)


def default_subsample_size(n: int, exponent: float = 0.7) -> int:
    """Subsample-size rule max(2, floor(n**exponent))."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return max(2, int(np.floor(float(n) ** exponent)))
