"""Paired-sample statistics: exact signed-rank test, effect size, bootstrap
intervals, and F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

MAX_EXACT_N = 25


class AllZeroDifferences(ValueError):
    pass


class ZeroSpread(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class PairedSeries:
    a: tuple[float, ...]
    b: tuple[float, ...]
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("paired series need equal, non-zero lengths")
        if self.labels is not None and len(self.labels) != len(self.a):
            raise ValueError("one label per pair")

    @property
    def differences(self) -> np.ndarray:
        return np.asarray(self.a) - np.asarray(self.b)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int


def _null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign patterns giving each doubled positive-rank sum."""
    counts = np.zeros(int(doubled_ranks.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:len(counts) - r]
        counts = counts + shifted
    return counts


def wilcoxon_exact(p: PairedSeries) -> WilcoxonResult:
    """Two-sided exact signed-rank test; zero differences are dropped and
    tied magnitudes share their average rank."""
    d = p.differences
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    if d.size > MAX_EXACT_N:
        raise ValueError(f"exact enumeration supports at most {MAX_EXACT_N} pairs")
    # average ranks are multiples of 1/2, so doubled ranks are integers
    doubled = np.rint(2 * rankdata(np.abs(d))).astype(np.int64)
    t_plus = int(doubled[d > 0].sum())
    t_minus = int(doubled[d < 0].sum())
    w = min(t_plus, t_minus)
    counts = _null_counts(doubled)
    p_value = min(1.0, 2.0 * counts[: w + 1].sum() / 2.0 ** d.size)
    return WilcoxonResult(w / 2.0, float(p_value), int(d.size))


def cohens_d_paired(p: PairedSeries) -> float:
    d = p.differences
    if d.size < 2:
        raise ValueError("need at least two pairs")
    sd = d.std(ddof=1)
    if sd == 0:
        raise ZeroSpread("paired differences have zero spread")
    return float(d.mean() / sd)


def bootstrap_ci(values, resamples: int = 10_000, level: float = 0.95,
                 seed: int = 42) -> tuple[float, float]:
    """Percentile interval for the mean from resampling with replacement."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("no values to resample")
    if resamples < 1 or not 0 < level < 1:
        raise ValueError("need resamples >= 1 and level in (0, 1)")
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, v.size, size=(resamples, v.size))].mean(axis=1)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(means, [tail, 100 - tail])
    return float(lo), float(hi)


def f1_score(predictions, truth) -> float:
    """F1 for class 1; defined as 0 when nothing is predicted or present."""
    pred = np.asarray(predictions).astype(bool)
    true = np.asarray(truth).astype(bool)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth differ in length")
    tp = int(np.sum(pred & true))
    denom = int(pred.sum() + true.sum())
    return 0.0 if denom == 0 else 2.0 * tp / denom
