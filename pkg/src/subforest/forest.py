"""Subsampled forest: B independently trained trees plus resampling records.

Tree b draws its subsample, honesty partition, and split randomness from a
stream derived from (seed, b), so the fitted model is a function of the
resolved config alone -- training with 1 or many workers yields identical
trees. Forest predictions are means over per-tree outputs taken in tree
order with numpy's pairwise summation, which keeps the reduction
deterministic as well.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng, tree as tree_mod
from .dataset import TrainingSet
from .sampling import default_subsample_size, draw_subsample, honesty_partition
from .tree import HONEST, TreeConfig, TreeModel


@dataclass(frozen=True)
class ForestConfig:
    """Forest sizing; s and b default to the floor(n^0.7) and 5n rules."""

    s: int | None = None
    b: int | None = None
    s_exponent: float = 0.7
    tree: TreeConfig = field(default_factory=TreeConfig)
    seed: int = 0

    def resolve(self, n: int) -> tuple[int, int]:
        s = self.s if self.s is not None else default_subsample_size(n, self.s_exponent)
        b = self.b if self.b is not None else 5 * n
        if not 2 <= s <= n:
            raise ValueError(f"subsample size s={s} must satisfy 2 <= s <= n={n}")
        if b < 1:
            raise ValueError(f"number of trees must be >= 1, got {b}")
        return s, b


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeModel, ...]
    subsample_indices: np.ndarray  # (B, s) int64, row b = sorted subsample of tree b
    n: int
    s: int
    b: int
    config: ForestConfig
    _packed: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.trees[0].n_features

    def counts_matrix(self) -> np.ndarray:
        """(B, n) 0/1 inclusion counts N*_bi of every tree's subsample."""
        counts = np.zeros((self.b, self.n), dtype=np.uint8)
        np.put_along_axis(counts, self.subsample_indices, 1, axis=1)
        return counts


def _fit_one(ts: TrainingSet, cfg: ForestConfig, s: int, b_index: int) -> TreeModel:
    gen = rng.stream(cfg.seed, rng.TREE, b_index)
    draw = draw_subsample(ts.n, s, gen)
    if cfg.tree.mode == HONEST:
        part = honesty_partition(draw, gen)
        return tree_mod.fit_honest(ts, draw, part, cfg.tree, gen)
    return tree_mod.fit_greedy_cart(ts, draw, cfg.tree, gen)


def _fit_range(args) -> list[TreeModel]:
    ts, cfg, s, b_lo, b_hi = args
    return [_fit_one(ts, cfg, s, b) for b in range(b_lo, b_hi)]


def train(ts: TrainingSet, cfg: ForestConfig, n_jobs: int = 1) -> ForestModel:
    """Train B trees on independent subsample draws; deterministic in (cfg, ts)."""
    s, b_total = cfg.resolve(ts.n)
    cfg = replace(cfg, s=s, b=b_total)
    if n_jobs <= 1 or b_total < 4:
        trees = [_fit_one(ts, cfg, s, b) for b in range(b_total)]
    else:
        chunk = max(1, -(-b_total // (4 * n_jobs)))
        ranges = [(ts, cfg, s, lo, min(lo + chunk, b_total)) for lo in range(0, b_total, chunk)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            trees = [t for block in pool.map(_fit_range, ranges) for t in block]
    indices = np.vstack([t.subsample.indices for t in trees])
    return ForestModel(trees=tuple(trees), subsample_indices=indices, n=ts.n, s=s, b=b_total, config=cfg)


def _pack(forest: ForestModel) -> dict:
    """Concatenate all tree node arrays for joint vectorized descent."""
    cache = forest._packed
    if "feature" not in cache:
        offsets = np.cumsum([0] + [t.n_nodes for t in forest.trees[:-1]])
        cache["roots"] = offsets.astype(np.int64)
        cache["feature"] = np.concatenate([t.feature for t in forest.trees]).astype(np.int64)
        cache["threshold"] = np.concatenate([t.threshold for t in forest.trees])
        cache["left"] = np.concatenate(
            [t.left + off for t, off in zip(forest.trees, offsets)]
        ).astype(np.int64)
        cache["right"] = np.concatenate(
            [t.right + off for t, off in zip(forest.trees, offsets)]
        ).astype(np.int64)
        cache["value"] = np.concatenate([t.value for t in forest.trees])
    return cache


def predict_per_tree(forest: ForestModel, xq) -> np.ndarray:
    """Per-tree predictions; (B,) for a single point, (B, K) for a matrix."""
    xq = np.asarray(xq, dtype=np.float64)
    single = xq.ndim == 1
    xs = np.atleast_2d(xq)
    if xs.shape[1] != forest.d:
        raise ValueError(f"expected {forest.d} features, got {xs.shape[1]}")
    p = _pack(forest)
    feature, threshold, left, right = p["feature"], p["threshold"], p["left"], p["right"]
    k = xs.shape[0]
    # flat (tree, point) state, b-major; finished pairs drop out of `act`
    cur = np.repeat(p["roots"], k)
    point_of = np.tile(np.arange(k), forest.b)
    act = np.arange(cur.size)
    while act.size:
        nodes = cur[act]
        feat = feature[nodes]
        live = feat >= 0
        act = act[live]
        if not act.size:
            break
        nodes = nodes[live]
        go_left = xs[point_of[act], feat[live]] <= threshold[nodes]
        cur[act] = np.where(go_left, left[nodes], right[nodes])
    values = p["value"][cur].reshape(forest.b, k)
    return values[:, 0] if single else values


def predict(forest: ForestModel, xq) -> float:
    """Forest prediction: arithmetic mean of the per-tree predictions."""
    return float(np.mean(predict_per_tree(forest, np.asarray(xq, dtype=np.float64).reshape(-1))))


def predict_batch(forest: ForestModel, xs) -> np.ndarray:
    return np.mean(predict_per_tree(forest, xs), axis=0)
