"""Exact brute-force references for the variance estimator and its theory.

Everything here enumerates instead of sampling:

  * ``exact_vij`` walks all C(n, s) subsamples and computes
    sum_i Cov(T, N_i)^2 under the uniform resampling measure -- the B -> infinity
    target of the Monte Carlo estimator (the estimator squares the per-example
    covariances; their unsquared sum is identically zero because sum_i N_i = s).
  * ``hajek_projection_stats`` enumerates i.i.d. tuples from a finite-support
    distribution and computes the first-order (Hajek) projection variance of a
    base learner exactly.
  * ``anova_bound_check`` verifies, exactly, that a subsampled ensemble stays
    within (s/n)^2 Var(T) of its own projection.
  * ``incrementality_curve`` reports Var(projection)/Var(T) against the
    uniform-density reference curve 2^(d+1)/(d-1)! / log(s)^d.

Learners are callables (xs, ys) -> float and must be exchangeable in their
rows; the tree learner canonicalizes row order and derives its internal
randomness from a content hash of the subsample, so each subsample maps to
one deterministic output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from . import rng
from .dataset import TrainingSet
from .sampling import SubsampleDraw, honesty_partition
from .tree import TreeConfig, fit_honest, predict

ENUM_CAP = 10**6


@dataclass(frozen=True)
class FiniteSupportDistribution:
    """Finitely many labeled atoms with probabilities summing to one."""

    xs: np.ndarray  # (q, d)
    ys: np.ndarray  # (q,)
    probs: np.ndarray  # (q,) positive

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=np.float64))
        ys = np.asarray(self.ys, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if not (xs.shape[0] == ys.size == probs.size):
            raise ValueError("atoms, labels, and probabilities must align")
        if np.any(probs <= 0.0):
            raise ValueError("atom probabilities must be positive")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return self.ys.size

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    def sample(self, gen: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        ids = gen.choice(self.size, size=m, p=self.probs)
        return self.xs[ids], self.ys[ids]


class SubsampleMean:
    def __call__(self, xs, ys) -> float:
        return float(np.mean(ys))

    def evaluate_many(self, ys_rows: np.ndarray) -> np.ndarray:
        return ys_rows.mean(axis=1)


class SubsampleMax:
    def __call__(self, xs, ys) -> float:
        return float(np.max(ys))

    def evaluate_many(self, ys_rows: np.ndarray) -> np.ndarray:
        return ys_rows.max(axis=1)


class LabelSum:
    """Linear learner T = sum_i Y_i; its projection ratio is exactly 1."""

    def __call__(self, xs, ys) -> float:
        return float(np.sum(ys))

    def evaluate_many(self, ys_rows: np.ndarray) -> np.ndarray:
        return ys_rows.sum(axis=1)


class HonestTreeLearner:
    """Honest tree fitted on the subsample, evaluated at a fixed test point.

    Internal randomness (partition, split draws) comes from a content hash of
    the canonically sorted subsample, so the map subsample -> output is
    deterministic and exchangeable.
    """

    def __init__(self, cfg: TreeConfig, x, base_seed: int = 0):
        self.cfg = cfg
        self.x = np.asarray(x, dtype=np.float64).reshape(-1)
        self.base_seed = base_seed

    def __call__(self, xs, ys) -> float:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ys = np.asarray(ys, dtype=np.float64)
        m = ys.size
        if m == 1:
            return float(ys[0])
        # canonical row order: lexicographic by (x_1, ..., x_d, y)
        order = np.lexsort((ys,) + tuple(xs.T[::-1]))
        xs, ys = np.ascontiguousarray(xs[order]), np.ascontiguousarray(ys[order])
        seed = rng.stable_hash64(xs.tobytes() + ys.tobytes()) ^ self.base_seed
        gen = rng.stream(seed, rng.PARTITION)
        ts = TrainingSet(xs, ys)
        draw = SubsampleDraw(np.arange(m, dtype=np.int64), m)
        part = honesty_partition(draw, gen)
        tree = fit_honest(ts, draw, part, self.cfg, gen)
        return predict(tree, self.x)


def _check_cap(count: int, what: str, cap: int = ENUM_CAP) -> None:
    if count > cap:
        raise ValueError(f"{what} = {count} exceeds the enumeration cap of {cap}")


def enumerate_subsamples(ts: TrainingSet, learner, s: int, cap: int = ENUM_CAP):
    """All C(n, s) index subsets with their learner outputs."""
    n = ts.n
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    m_total = math.comb(n, s)
    _check_cap(m_total, f"number of subsamples C({n},{s})")
    subsets = np.fromiter(
        (i for combo in combinations(range(n), s) for i in combo),
        dtype=np.int64,
        count=m_total * s,
    ).reshape(m_total, s)
    if hasattr(learner, "evaluate_many"):
        values = np.asarray(learner.evaluate_many(ts.y[subsets]), dtype=np.float64)
    else:
        values = np.array([learner(ts.x[row], ts.y[row]) for row in subsets])
    return subsets, values


def exact_forest_value(ts: TrainingSet, learner, s: int, cap: int = ENUM_CAP) -> float:
    """B -> infinity forest output: the mean of T over all C(n, s) subsamples."""
    _, values = enumerate_subsamples(ts, learner, s, cap)
    return float(values.mean())


def exact_vij(ts: TrainingSet, learner, s: int, cap: int = ENUM_CAP) -> float:
    """Exact sum_i Cov(T, N_i)^2 over the uniform subsampling measure."""
    subsets, values = enumerate_subsamples(ts, learner, s, cap)
    n = ts.n
    m_total = values.size
    t_bar = values.mean()
    membership = np.zeros((m_total, n), dtype=bool)
    membership[np.arange(m_total)[:, None], subsets] = True
    total = 0.0
    for i in range(n):
        cov_i = float(values[membership[:, i]].sum()) / m_total - t_bar * (s / n)
        total += cov_i * cov_i
    return total


@dataclass(frozen=True)
class HajekStats:
    hajek_variance: float
    base_variance: float
    ratio: float  # nan when degenerate
    degenerate: bool  # Var(T) == 0


def _tuple_enumeration(dist: FiniteSupportDistribution, s: int, cap: int = ENUM_CAP):
    q = dist.size
    count = q**s
    _check_cap(count, f"number of i.i.d. tuples {q}^{s}")
    ids = np.fromiter(
        (i for tup in product(range(q), repeat=s) for i in tup),
        dtype=np.int64,
        count=count * s,
    ).reshape(count, s)
    probs = dist.probs[ids].prod(axis=1)
    return ids, probs


def _tuple_values(dist: FiniteSupportDistribution, learner, ids: np.ndarray) -> np.ndarray:
    if hasattr(learner, "evaluate_many"):
        return np.asarray(learner.evaluate_many(dist.ys[ids]), dtype=np.float64)
    return np.array([learner(dist.xs[row], dist.ys[row]) for row in ids])


def hajek_projection_stats(
    dist: FiniteSupportDistribution, learner, s: int, cap: int = ENUM_CAP
) -> HajekStats:
    """Exact Var of the Hajek projection of T(Z_1..Z_s) vs Var(T).

    Uses Var(projection) = s * Var_z(E[T | Z_1 = z]), which holds for
    exchangeable learners over i.i.d. inputs.
    """
    ids, probs = _tuple_enumeration(dist, s, cap)
    values = _tuple_values(dist, learner, ids)
    e_t = float(probs @ values)
    base_var = float(probs @ (values - e_t) ** 2)
    q = dist.size
    cond = np.zeros(q)
    for z in range(q):
        mask = ids[:, 0] == z
        cond[z] = float(probs[mask] @ values[mask]) / dist.probs[z]
    hajek_var = s * float(dist.probs @ (cond - e_t) ** 2)
    if base_var == 0.0:
        return HajekStats(hajek_var, base_var, math.nan, True)
    return HajekStats(hajek_var, base_var, hajek_var / base_var, False)


@dataclass(frozen=True)
class OracleReport:
    exact_forest_value: float
    hajek_variance: float
    base_variance: float
    incrementality_ratio: float
    anova_lhs: float
    anova_rhs: float
    n: int
    s: int


def anova_bound_check(
    dist: FiniteSupportDistribution, learner, n: int, s: int, cap: int = ENUM_CAP
) -> OracleReport:
    """Exact check that E[(RF - proj(RF))^2] <= (s/n)^2 Var(T).

    Enumerates every n-tuple of atoms, computes the subsampled ensemble
    RF = mean of T over all C(n, s) index subsets, its exact Hajek
    projection, and both sides of the bound. Raises AssertionError when the
    bound fails beyond 1e-10 relative slack (it cannot, for a finite-variance
    learner).
    """
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    ids, probs = _tuple_enumeration(dist, n, cap)
    subsets = list(combinations(range(n), s))

    memo: dict[tuple, float] = {}

    def t_of(atom_ids) -> float:
        key = tuple(sorted(atom_ids))
        if key not in memo:
            sel = np.asarray(key, dtype=np.int64)
            memo[key] = float(learner(dist.xs[sel], dist.ys[sel]))
        return memo[key]

    count = ids.shape[0]
    rf = np.empty(count)
    for row in range(count):
        tup = ids[row]
        acc = 0.0
        for sub in subsets:
            acc += t_of(tup[list(sub)])
        rf[row] = acc / len(subsets)

    e_rf = float(probs @ rf)
    q = dist.size
    cond = np.zeros(q)
    for z in range(q):
        mask = ids[:, 0] == z
        cond[z] = float(probs[mask] @ rf[mask]) / dist.probs[z]
    projection = e_rf + (cond[ids] - e_rf).sum(axis=1)
    lhs = float(probs @ (rf - projection) ** 2)

    stats = hajek_projection_stats(dist, learner, s, cap)
    rhs = (s / n) ** 2 * stats.base_variance
    assert lhs <= rhs * (1.0 + 1e-10) + 1e-300, (
        f"ANOVA bound violated: E[(RF - proj)^2] = {lhs!r} > (s/n)^2 Var(T) = {rhs!r}"
    )
    return OracleReport(
        exact_forest_value=e_rf,
        hajek_variance=stats.hajek_variance,
        base_variance=stats.base_variance,
        incrementality_ratio=stats.ratio,
        anova_lhs=lhs,
        anova_rhs=rhs,
        n=n,
        s=s,
    )


@dataclass(frozen=True)
class IncrementalityPoint:
    s: int
    ratio: float
    reference: float | None  # C_f / log(s)^d, uniform-density case only
    ratio_se: float  # 0 for exact enumeration
    degenerate: bool
    method: str  # "exact" or "mc"


def uniform_density_reference(s: int, d: int) -> float:
    """Reference lower-bound curve 2^(d+1)/(d-1)! / log(s)^d (uniform density)."""
    c_f = 2.0 ** (d + 1) / math.factorial(d - 1)
    return c_f / math.log(s) ** d


def incrementality_curve(
    cfg: TreeConfig,
    source,
    s_values,
    x,
    seed: int = 0,
    outer: int = 1000,
    inner: int = 1000,
    uniform_density: bool = True,
    cap: int = ENUM_CAP,
    learner=None,
) -> list[IncrementalityPoint]:
    """Projection-variance ratio of an honest tree learner across subsample sizes.

    Exact enumeration when the source is finite with q^s under the cap,
    otherwise nested Monte Carlo with ``outer`` conditioning draws and
    ``inner`` completions each (both at least 1000, per the estimator's
    accuracy floor). Diagnostic only: the reference bound is asymptotic.
    ``learner`` overrides the honest-tree base learner (mainly for testing
    the Monte Carlo path with cheap batch learners).
    """
    points = []
    for s in s_values:
        if learner is None:
            learner = HonestTreeLearner(cfg, x)
        d = source.d
        ref = uniform_density_reference(s, d) if uniform_density else None
        if isinstance(source, FiniteSupportDistribution) and source.size**s <= cap:
            stats = hajek_projection_stats(source, learner, s, cap)
            points.append(
                IncrementalityPoint(s, stats.ratio, ref, 0.0, stats.degenerate, "exact")
            )
            continue
        if outer < 1000 or inner < 1000:
            raise ValueError("nested Monte Carlo needs outer >= 1000 and inner >= 1000")
        gen = rng.stream(seed, rng.SPLIT, s)
        cond_means = np.empty(outer)
        cond_vars = np.empty(outer)
        batch = hasattr(learner, "evaluate_many")
        for j in range(outer):
            xz, yz = source.sample(gen, 1)
            if batch:
                _, yr = source.sample(gen, inner * (s - 1))
                ys_rows = np.column_stack([np.full(inner, yz[0]), yr.reshape(inner, s - 1)])
                vals = np.asarray(learner.evaluate_many(ys_rows), dtype=np.float64)
            else:
                vals = np.empty(inner)
                for l in range(inner):
                    xr, yr = source.sample(gen, s - 1)
                    vals[l] = learner(np.vstack([xz, xr]), np.concatenate([yz, yr]))
            cond_means[j] = vals.mean()
            cond_vars[j] = vals.var(ddof=1)
        var_t = float(cond_means.var(ddof=1)) + float(cond_vars.mean()) * (1.0 - 1.0 / inner)
        var_cond = float(cond_means.var(ddof=1)) - float(cond_vars.mean()) / inner
        if var_t <= 0.0:
            points.append(IncrementalityPoint(s, math.nan, ref, 0.0, True, "mc"))
            continue
        ratio = s * var_cond / var_t
        # block-wise spread of the ratio over 10 outer-loop blocks
        blocks = 10
        size = outer // blocks
        block_ratios = []
        for k in range(blocks):
            sl = slice(k * size, (k + 1) * size)
            bv = float(cond_means[sl].var(ddof=1)) - float(cond_vars[sl].mean()) / inner
            block_ratios.append(s * bv / var_t)
        se = float(np.std(block_ratios, ddof=1)) / math.sqrt(blocks)
        points.append(IncrementalityPoint(s, ratio, ref, se, False, "mc"))
    return points
