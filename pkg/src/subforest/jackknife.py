"""Infinitesimal-jackknife variance of forest predictions, with the finite-B
Monte Carlo bias correction:

    C_i       = (1/B) sum_b (N*_bi - s/n) (T*_b - Tbar)
    plugin    = sum_i C_i^2
    v_hat     = (1/B) sum_b (T*_b - Tbar)^2
    corrected = plugin - s(n-s)/n * v_hat / B

The centering constant is the exact without-replacement expectation s/n.
``corrected`` may come out negative at small B; it is preserved as-is and
only truncated at zero for interval construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import ForestModel, predict_per_tree
from .normal import norm_ppf


@dataclass(frozen=True)
class VarianceEstimate:
    plugin: float  # sum_i C_i^2, >= 0
    correction: float  # s(n-s)/n * v_hat / B, >= 0
    corrected: float  # plugin - correction, may be negative
    truncated: float  # max(corrected, 0)
    v_hat: float  # (1/B) sum_b (T*_b - Tbar)^2
    c: np.ndarray  # (n,) per-example covariance weights C_i


@dataclass(frozen=True)
class PredictionInterval:
    center: float
    half_width: float
    level: float
    degenerate: bool  # corrected variance was negative

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width


def _check(outputs: np.ndarray, counts: np.ndarray, s: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    outputs = np.asarray(outputs, dtype=np.float64)
    counts = np.asarray(counts)
    if outputs.ndim != 1:
        raise ValueError("tree outputs must be a 1-d vector")
    b = outputs.size
    if b < 2:
        raise ValueError(f"variance estimation needs B >= 2 tree outputs, got {b}")
    if counts.shape != (b, n):
        raise ValueError(f"counts shape {counts.shape} does not match (B={b}, n={n})")
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    return outputs, counts


def c_weights(outputs, counts, s: int, n: int) -> np.ndarray:
    """Per-example weights C_i from tree outputs and inclusion counts."""
    outputs, counts = _check(outputs, counts, s, n)
    b = outputs.size
    centered = outputs - outputs.mean()
    return (counts - s / n).T.astype(np.float64) @ centered / b


def v_ij(outputs, counts, s: int, n: int) -> VarianceEstimate:
    """Plug-in and bias-corrected infinitesimal-jackknife variance estimate."""
    outputs, counts = _check(outputs, counts, s, n)
    b = outputs.size
    centered = outputs - outputs.mean()
    c = (counts - s / n).T.astype(np.float64) @ centered / b
    plugin = float(c @ c)
    v_hat = float(centered @ centered) / b
    correction = s * (n - s) / n * v_hat / b
    corrected = plugin - correction
    return VarianceEstimate(
        plugin=plugin,
        correction=correction,
        corrected=corrected,
        truncated=max(corrected, 0.0),
        v_hat=v_hat,
        c=c,
    )


def variance_estimates(forest: ForestModel, xs) -> list[VarianceEstimate]:
    """Batch v_ij for each row of ``xs`` against one fitted forest."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    outputs = predict_per_tree(forest, xs)  # (B, K)
    counts = forest.counts_matrix()
    centered = outputs - outputs.mean(axis=0, keepdims=True)
    b, n, s = forest.b, forest.n, forest.s
    c_all = (counts - s / n).T.astype(np.float64) @ centered / b  # (n, K)
    plugin = np.einsum("ik,ik->k", c_all, c_all)
    v_hat = np.einsum("bk,bk->k", centered, centered) / b
    correction = s * (n - s) / n * v_hat / b
    corrected = plugin - correction
    return [
        VarianceEstimate(
            plugin=float(plugin[k]),
            correction=float(correction[k]),
            corrected=float(corrected[k]),
            truncated=max(float(corrected[k]), 0.0),
            v_hat=float(v_hat[k]),
            c=c_all[:, k],
        )
        for k in range(xs.shape[0])
    ]


def interval(y_hat: float, estimate: VarianceEstimate, level: float) -> PredictionInterval:
    """Normal-approximation interval for E[y_hat] at the given level."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = norm_ppf(0.5 * (1.0 + level))
    return PredictionInterval(
        center=float(y_hat),
        half_width=z * float(np.sqrt(estimate.truncated)),
        level=level,
        degenerate=estimate.corrected < 0.0,
    )
