"""Base learners: honest regular trees and a greedy CART-style baseline.

The honest mode splits the subsample into structure points (drive the
splits) and prediction points (fill the leaves), recursing until every leaf
holds exactly one prediction point whose label becomes the leaf value. Split
decisions may read structure features, structure labels, and prediction
FEATURES (to keep at least one prediction point per side), but never
prediction labels: permuting prediction labels leaves the split structure
bit-identical.

Split rule, honest mode:
  * with probability ``delta`` the split axis is uniformly random,
    otherwise the axis with the best structure-label variance reduction;
  * candidate thresholds are midpoints between consecutive distinct sorted
    structure coordinates on the axis;
  * a candidate is admissible iff each child keeps at least a ``gamma``
    fraction of the node's subsample points and at least one prediction
    point; the admissible candidate with the best variance reduction wins,
    ties going to the lowest threshold;
  * when the drawn axis has no admissible candidate, the axis is redrawn
    uniformly among axes that do; if no axis does but more than one
    prediction point remains, the node is split at a random admissible
    midpoint of the prediction coordinates.

The greedy CART mode uses all subsample labels for both splitting and leaf
means, stopping at ``max_leaf_size``; it exists as the dishonest baseline.

Routing is axis-aligned with ties at the threshold going left
(x[axis] <= threshold).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainingSet
from .sampling import HonestyPartition, SubsampleDraw

HONEST = "honest"
CART = "cart"

# nodes at or below this many points are grown by the plain-Python splitter,
# which beats numpy's per-call overhead on tiny arrays
_SMALL_NODE = 24


@dataclass(frozen=True)
class TreeConfig:
    gamma: float = 0.10  # minimum child fraction per split
    delta: float = 0.5  # probability of a uniformly random split axis
    mode: str = HONEST
    max_leaf_size: int = 5  # greedy CART stop rule

    def __post_init__(self):
        if not 0.0 < self.gamma < 0.5:
            raise ValueError(f"gamma must be in (0, 0.5), got {self.gamma}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.mode not in (HONEST, CART):
            raise ValueError(f"mode must be {HONEST!r} or {CART!r}, got {self.mode!r}")
        if self.max_leaf_size < 1:
            raise ValueError(f"max_leaf_size must be >= 1, got {self.max_leaf_size}")


@dataclass(frozen=True)
class TreeModel:
    """Fitted tree as flat node arrays; node 0 is the root, feature -1 marks a leaf."""

    feature: np.ndarray  # (nodes,) int32, split axis or -1
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int32 child ids
    right: np.ndarray  # (nodes,) int32
    value: np.ndarray  # (nodes,) float64 leaf predictions
    pred_index: np.ndarray  # (nodes,) int32 training index behind a leaf, -1 for CART
    from_random: np.ndarray  # (nodes,) bool, split axis came from the uniform branch
    n_features: int
    config: TreeConfig
    subsample: SubsampleDraw
    partition: HonestyPartition | None = field(default=None)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))


class _Builder:
    __slots__ = ("feature", "threshold", "left", "right", "value", "pred_index", "from_random")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.pred_index = []
        self.from_random = []

    def alloc(self) -> int:
        # threshold/value stay 0.0 where not applicable (leaf/internal)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.pred_index.append(-1)
        self.from_random.append(False)
        return len(self.feature) - 1

    def leaf(self, nid: int, value: float, pred_index: int = -1) -> None:
        self.value[nid] = value
        self.pred_index[nid] = pred_index

    def split(self, nid: int, axis: int, thr: float, lid: int, rid: int, rand: bool) -> None:
        self.feature[nid] = axis
        self.threshold[nid] = thr
        self.left[nid] = lid
        self.right[nid] = rid
        self.from_random[nid] = rand

    def freeze(self, n_features, config, draw, partition) -> TreeModel:
        return TreeModel(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            pred_index=np.asarray(self.pred_index, dtype=np.int32),
            from_random=np.asarray(self.from_random, dtype=bool),
            n_features=n_features,
            config=config,
            subsample=draw,
            partition=partition,
        )


def _best_structure_candidate(x, y, S, P, axis, gamma):
    """Best admissible midpoint on one axis, or None.

    Returns (threshold, score) where score is the sum-of-squares gain proxy
    sum_left^2/n_left + sum_right^2/n_right over structure labels (argmax of
    the first maximum implements the lowest-threshold tie rule).
    """
    nS = S.size
    if nS < 2:
        return None
    sx = x[S, axis]
    order = np.argsort(sx)
    sxo = sx[order]
    neq = sxo[:-1] < sxo[1:]
    if not neq.any():
        return None
    bounds = np.flatnonzero(neq)
    t = 0.5 * (sxo[bounds] + sxo[bounds + 1])

    nP = P.size
    m = nS + nP
    left_p = np.sort(x[P, axis]).searchsorted(t, side="right")
    ok = (left_p >= 1) & (left_p <= nP - 1)
    if 1.0 / m < gamma:  # otherwise one point per side already meets gamma
        frac_l = (bounds + 1 + left_p) / m
        ok &= (frac_l >= gamma) & ((1.0 - frac_l) >= gamma)
    if not ok.any():
        return None
    bounds = bounds[ok]
    t = t[ok]

    csum = np.cumsum(y[S[order]])
    n_left = bounds + 1.0
    lsum = csum[bounds]
    total = csum[-1]
    score = lsum * lsum / n_left + (total - lsum) ** 2 / (nS - n_left)
    k = int(np.argmax(score))
    return float(t[k]), float(score[k])


def _prediction_fallback_split(x, S, P, gamma, rng):
    """Random admissible midpoint over prediction coordinates, or None."""
    m = S.size + P.size
    d = x.shape[1]
    unconstrained = 1.0 / m >= gamma
    eligible = []
    for axis in range(d):
        px = np.sort(x[P, axis])
        neq = px[:-1] < px[1:]
        if not neq.any():
            continue
        bounds = np.flatnonzero(neq)
        t = 0.5 * (px[bounds] + px[bounds + 1])
        if not unconstrained:
            left_all = bounds + 1 + np.sort(x[S, axis]).searchsorted(t, side="right")
            frac_l = left_all / m
            ok = (frac_l >= gamma) & ((1.0 - frac_l) >= gamma)
            if not ok.any():
                continue
            t = t[ok]
        eligible.append((axis, t))
    if not eligible:
        return None
    axis, ts = eligible[int(rng.integers(len(eligible)))]
    return axis, float(ts[int(rng.integers(ts.size))])


def _choose_split_honest(x, y, S, P, cfg, rng):
    """Returns (axis, threshold, from_random) or None if the node cannot split."""
    d = x.shape[1]
    cache: list = [False] * d  # False = not yet evaluated

    def best(axis):
        if cache[axis] is False:
            cache[axis] = _best_structure_candidate(x, y, S, P, axis, cfg.gamma)
        return cache[axis]

    use_random = rng.random() < cfg.delta
    if use_random:
        axis = int(rng.integers(d))
        res = best(axis)
        if res is not None:
            return axis, res[0], True
        others = [a for a in range(d) if a != axis and best(a) is not None]
        if others:
            axis = others[int(rng.integers(len(others)))]
            return axis, best(axis)[0], True
    else:
        best_axis, best_t, best_score = -1, np.nan, -np.inf
        for a in range(d):
            res = best(a)
            if res is not None and res[1] > best_score:
                best_axis, best_t, best_score = a, res[0], res[1]
        if best_axis >= 0:
            return best_axis, best_t, False
        # greedy branch found nothing; only the fallback below remains
    fb = _prediction_fallback_split(x, S, P, cfg.gamma, rng)
    if fb is None:
        return None
    return fb[0], fb[1], True


def _small_axis_candidate(S_rows, P_rows, axis, gamma):
    """Plain-Python twin of _best_structure_candidate for tiny nodes."""
    nS = len(S_rows)
    if nS < 2:
        return None
    pairs = sorted((r[0][axis], r[1]) for r in S_rows)
    coords = [p[0] for p in pairs]
    cand = [i for i in range(nS - 1) if coords[i] < coords[i + 1]]
    if not cand:
        return None
    pxs = sorted(r[0][axis] for r in P_rows)
    nP = len(P_rows)
    m = nS + nP
    unconstrained = 1.0 / m >= gamma
    pref = [0.0]
    acc = 0.0
    for _, lab in pairs:
        acc += lab
        pref.append(acc)
    total = acc
    best_t, best_score = None, -np.inf
    for i in cand:
        t = 0.5 * (coords[i] + coords[i + 1])
        lp = bisect_right(pxs, t)
        if lp < 1 or lp > nP - 1:
            continue
        if not unconstrained:
            frac_l = (i + 1 + lp) / m
            if not (frac_l >= gamma and (1.0 - frac_l) >= gamma):
                continue
        lsum = pref[i + 1]
        n_left = i + 1.0
        score = lsum * lsum / n_left + (total - lsum) ** 2 / (nS - n_left)
        if score > best_score:
            best_t, best_score = t, score
    if best_t is None:
        return None
    return best_t, best_score


def _small_fallback(S_rows, P_rows, gamma, d, rng):
    """Plain-Python twin of _prediction_fallback_split."""
    m = len(S_rows) + len(P_rows)
    unconstrained = 1.0 / m >= gamma
    eligible = []
    for axis in range(d):
        pxs = sorted(r[0][axis] for r in P_rows)
        ts = [
            0.5 * (pxs[i] + pxs[i + 1])
            for i in range(len(pxs) - 1)
            if pxs[i] < pxs[i + 1]
        ]
        if not ts:
            continue
        if not unconstrained:
            sxs = sorted(r[0][axis] for r in S_rows)
            kept = []
            for t in ts:
                left = bisect_right(pxs, t) + bisect_right(sxs, t)
                frac_l = left / m
                if frac_l >= gamma and (1.0 - frac_l) >= gamma:
                    kept.append(t)
            ts = kept
            if not ts:
                continue
        eligible.append((axis, ts))
    if not eligible:
        return None
    axis, ts = eligible[int(rng.integers(len(eligible)))]
    return axis, ts[int(rng.integers(len(ts)))]


def _grow_small_subtree(b, nid0, S_rows, P_rows, cfg, rng, d):
    """Grow a subtree on plain-Python rows: (coords, label) / (coords, label, index)."""
    gamma, delta = cfg.gamma, cfg.delta
    stack = [(nid0, S_rows, P_rows)]
    while stack:
        nid, S, P = stack.pop()
        if len(P) == 1:
            b.leaf(nid, P[0][1], P[0][2])
            continue
        choice = None
        use_random = rng.random() < delta
        if use_random:
            axis = int(rng.integers(d))
            res = _small_axis_candidate(S, P, axis, gamma)
            if res is not None:
                choice = (axis, res[0], True)
            else:
                others = [
                    a for a in range(d)
                    if a != axis and _small_axis_candidate(S, P, a, gamma) is not None
                ]
                if others:
                    axis = others[int(rng.integers(len(others)))]
                    choice = (axis, _small_axis_candidate(S, P, axis, gamma)[0], True)
        else:
            best_axis, best_t, best_score = -1, None, -np.inf
            for a in range(d):
                res = _small_axis_candidate(S, P, a, gamma)
                if res is not None and res[1] > best_score:
                    best_axis, best_t, best_score = a, res[0], res[1]
            if best_axis >= 0:
                choice = (best_axis, best_t, False)
        if choice is None:
            fb = _small_fallback(S, P, gamma, d, rng)
            if fb is not None:
                choice = (fb[0], fb[1], True)
        if choice is None:
            # duplicate feature vectors: nothing can separate the points
            gi, yv = min((p[2], p[1]) for p in P)
            b.leaf(nid, yv, gi)
            continue
        axis, thr, rand = choice
        lid = b.alloc()
        rid = b.alloc()
        b.split(nid, axis, thr, lid, rid, rand)
        stack.append((rid, [r for r in S if r[0][axis] > thr], [r for r in P if r[0][axis] > thr]))
        stack.append((lid, [r for r in S if r[0][axis] <= thr], [r for r in P if r[0][axis] <= thr]))


def fit_honest(
    ts: TrainingSet,
    draw: SubsampleDraw,
    partition: HonestyPartition,
    cfg: TreeConfig,
    rng: np.random.Generator,
) -> TreeModel:
    """Grow an honest regular tree on the given subsample and partition."""
    if draw.s < 2:
        raise ValueError(f"honest trees need a subsample of size >= 2, got {draw.s}")
    if partition.prediction.size < 1:
        raise ValueError("empty prediction set")
    if draw.n != ts.n:
        raise ValueError(f"draw over n={draw.n} does not match training set n={ts.n}")

    x, y = ts.x, ts.y
    b = _Builder()
    root = b.alloc()
    stack = [(root, partition.structure, partition.prediction)]
    while stack:
        nid, S, P = stack.pop()
        if P.size == 1:
            p = int(P[0])
            b.leaf(nid, float(y[p]), p)
            continue
        if S.size + P.size <= _SMALL_NODE:
            s_rows = list(zip(x[S].tolist(), y[S].tolist()))
            p_rows = list(zip(x[P].tolist(), y[P].tolist(), P.tolist()))
            _grow_small_subtree(b, nid, s_rows, p_rows, cfg, rng, ts.d)
            continue
        choice = _choose_split_honest(x, y, S, P, cfg, rng)
        if choice is None:
            # duplicate feature vectors: nothing can separate the points
            p = int(P.min())
            b.leaf(nid, float(y[p]), p)
            continue
        axis, thr, rand = choice
        s_left = x[S, axis] <= thr
        p_left = x[P, axis] <= thr
        lid = b.alloc()
        rid = b.alloc()
        b.split(nid, axis, thr, lid, rid, rand)
        stack.append((rid, S[~s_left], P[~p_left]))
        stack.append((lid, S[s_left], P[p_left]))
    return b.freeze(ts.d, cfg, draw, partition)


def _grow_small_cart(b, nid0, rows, cfg, d):
    """Plain-Python CART subtree on rows of (coords, label)."""
    max_leaf = cfg.max_leaf_size
    stack = [(nid0, rows)]
    while stack:
        nid, R = stack.pop()
        m = len(R)
        labels = [r[1] for r in R]
        total = 0.0
        for v in labels:
            total += v
        first = labels[0]
        if m <= max_leaf or all(v == first for v in labels):
            b.leaf(nid, total / m)
            continue
        best_axis, best_t, best_score = -1, None, -np.inf
        for axis in range(d):
            pairs = sorted((r[0][axis], r[1]) for r in R)
            coords = [p[0] for p in pairs]
            acc = 0.0
            pref = [0.0]
            for _, lab in pairs:
                acc += lab
                pref.append(acc)
            tot = acc
            for i in range(m - 1):
                if coords[i] >= coords[i + 1]:
                    continue
                lsum = pref[i + 1]
                n_left = i + 1.0
                score = lsum * lsum / n_left + (tot - lsum) ** 2 / (m - n_left)
                if score > best_score:
                    best_axis = axis
                    best_t = 0.5 * (coords[i] + coords[i + 1])
                    best_score = score
        if best_axis < 0 or best_score <= total * total / m:
            b.leaf(nid, total / m)
            continue
        lid = b.alloc()
        rid = b.alloc()
        b.split(nid, best_axis, best_t, lid, rid, False)
        stack.append((rid, [r for r in R if r[0][best_axis] > best_t]))
        stack.append((lid, [r for r in R if r[0][best_axis] <= best_t]))


def _best_cart_split(x, y, idx, axis):
    """Best midpoint by variance reduction over all node labels, or None."""
    cx = x[idx, axis]
    order = np.argsort(cx, kind="stable")
    cxo = cx[order]
    bounds = np.nonzero(cxo[:-1] < cxo[1:])[0]
    if bounds.size == 0:
        return None
    cyo = y[idx][order]
    csum = np.cumsum(cyo)
    n_left = bounds + 1.0
    lsum = csum[bounds]
    total = csum[-1]
    score = lsum * lsum / n_left + (total - lsum) ** 2 / (idx.size - n_left)
    k = int(np.argmax(score))
    t = 0.5 * (cxo[bounds] + cxo[bounds + 1])
    return float(t[k]), float(score[k])


def fit_greedy_cart(
    ts: TrainingSet,
    draw: SubsampleDraw,
    cfg: TreeConfig,
    rng: np.random.Generator | None = None,
) -> TreeModel:
    """Grow a greedy CART-style tree (deterministic; rng kept for interface parity)."""
    if draw.n != ts.n:
        raise ValueError(f"draw over n={draw.n} does not match training set n={ts.n}")
    x, y = ts.x, ts.y
    d = ts.d
    b = _Builder()
    root = b.alloc()
    stack = [(root, draw.indices)]
    while stack:
        nid, idx = stack.pop()
        labels = y[idx]
        if idx.size <= cfg.max_leaf_size or np.all(labels == labels[0]):
            b.leaf(nid, float(labels.mean()))
            continue
        if idx.size <= _SMALL_NODE:
            _grow_small_cart(b, nid, list(zip(x[idx].tolist(), labels.tolist())), cfg, d)
            continue
        best_axis, best_t, best_score = -1, np.nan, -np.inf
        for axis in range(d):
            res = _best_cart_split(x, y, idx, axis)
            if res is not None and res[1] > best_score:
                best_axis, best_t, best_score = axis, res[0], res[1]
        total = float(labels.sum())
        if best_axis < 0 or best_score <= total * total / idx.size:
            b.leaf(nid, float(labels.mean()))
            continue
        go_left = x[idx, best_axis] <= best_t
        lid = b.alloc()
        rid = b.alloc()
        b.split(nid, best_axis, best_t, lid, rid, False)
        stack.append((rid, idx[~go_left]))
        stack.append((lid, idx[go_left]))
    return b.freeze(d, cfg, draw, None)


def _leaf_of(tree: TreeModel, xq: np.ndarray) -> int:
    nid = 0
    feature = tree.feature
    while feature[nid] >= 0:
        if xq[feature[nid]] <= tree.threshold[nid]:
            nid = tree.left[nid]
        else:
            nid = tree.right[nid]
    return nid


def predict(tree: TreeModel, xq) -> float:
    """Prediction of the unique leaf containing xq (ties at thresholds go left)."""
    xq = np.asarray(xq, dtype=np.float64).reshape(-1)
    if xq.size != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {xq.size}")
    return float(tree.value[_leaf_of(tree, xq)])


def predict_batch(tree: TreeModel, xs: np.ndarray) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {xs.shape[1]}")
    return np.array([tree.value[_leaf_of(tree, row)] for row in xs])


def selected_index(tree: TreeModel, xq) -> int:
    """Training index i*(x) behind the leaf prediction (honest trees only)."""
    if tree.config.mode != HONEST:
        raise ValueError("selected_index is defined for honest trees only")
    xq = np.asarray(xq, dtype=np.float64).reshape(-1)
    if xq.size != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {xq.size}")
    return int(tree.pred_index[_leaf_of(tree, xq)])


def is_pnn(xq, i: int, candidates, ts: TrainingSet) -> bool:
    """True iff no other candidate lies in the closed rectangle spanned by xq and X_i."""
    xq = np.asarray(xq, dtype=np.float64).reshape(-1)
    if xq.size != ts.d:
        raise ValueError(f"expected {ts.d} features, got {xq.size}")
    candidates = np.asarray(list(candidates), dtype=np.int64)
    if i not in candidates:
        raise ValueError(f"index {i} not among the candidates")
    xi = ts.x[i]
    lo = np.minimum(xq, xi)
    hi = np.maximum(xq, xi)
    others = candidates[candidates != i]
    if others.size == 0:
        return True
    pts = ts.x[others]
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    return not bool(inside.any())


@dataclass(frozen=True)
class RegularityReport:
    """Per-split child fractions and per-leaf prediction counts of an honest tree."""

    split_axes: np.ndarray  # (splits,) int32
    split_from_random: np.ndarray  # (splits,) bool
    split_min_fraction: np.ndarray  # (splits,) float64, min child fraction
    splits_ok: np.ndarray  # (splits,) bool, min fraction >= gamma
    leaf_pred_counts: np.ndarray  # (leaves,) int64
    leaves_ok: np.ndarray  # (leaves,) bool, exactly one prediction point
    gamma: float

    @property
    def passed(self) -> bool:
        return bool(self.splits_ok.all() and self.leaves_ok.all())


def validate_regularity(tree: TreeModel, ts: TrainingSet) -> RegularityReport:
    """Audit child fractions and leaf occupancy by re-routing the subsample."""
    if tree.config.mode != HONEST or tree.partition is None:
        raise ValueError("regularity validation is defined for honest trees only")
    gamma = tree.config.gamma
    axes, rand, min_frac, ok = [], [], [], []
    leaf_counts, leaves_ok = [], []
    stack = [(0, tree.subsample.indices, tree.partition.prediction)]
    while stack:
        nid, idx, pidx = stack.pop()
        axis = int(tree.feature[nid])
        if axis < 0:
            leaf_counts.append(pidx.size)
            leaves_ok.append(
                pidx.size == 1
                and int(tree.pred_index[nid]) == int(pidx[0])
                and tree.value[nid] == ts.y[int(pidx[0])]
            )
            continue
        thr = tree.threshold[nid]
        go_left = ts.x[idx, axis] <= thr
        p_left = ts.x[pidx, axis] <= thr
        frac = float(np.count_nonzero(go_left)) / idx.size
        mf = min(frac, 1.0 - frac)
        axes.append(axis)
        rand.append(bool(tree.from_random[nid]))
        min_frac.append(mf)
        ok.append(mf >= gamma)
        stack.append((int(tree.right[nid]), idx[~go_left], pidx[~p_left]))
        stack.append((int(tree.left[nid]), idx[go_left], pidx[p_left]))
    return RegularityReport(
        split_axes=np.asarray(axes, dtype=np.int32),
        split_from_random=np.asarray(rand, dtype=bool),
        split_min_fraction=np.asarray(min_frac, dtype=np.float64),
        splits_ok=np.asarray(ok, dtype=bool),
        leaf_pred_counts=np.asarray(leaf_counts, dtype=np.int64),
        leaves_ok=np.asarray(leaves_ok, dtype=bool),
        gamma=gamma,
    )
