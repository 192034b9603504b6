"""Seeded synthetic tables standing in for real census- and clinic-style data."""

from __future__ import annotations

import numpy as np

from .dataset import ColumnSpec, Table

STRONG_SCHEMA = (
    ColumnSpec("age", "integer"),
    ColumnSpec("education_num", "integer"),
    ColumnSpec("hours_per_week", "integer"),
    ColumnSpec("capital_index", "continuous"),
    ColumnSpec("workclass", "categorical", categories=tuple(f"w{i}" for i in range(6))),
    ColumnSpec("marital", "categorical", categories=tuple(f"m{i}" for i in range(5))),
    ColumnSpec("region_score", "continuous"),
    ColumnSpec("tenure", "integer"),
    ColumnSpec("income", "integer", "target"),
)

WEAK_SCHEMA = (
    ColumnSpec("age", "integer"),
    ColumnSpec("num_visits", "integer"),
    ColumnSpec("num_medications", "integer"),
    ColumnSpec("lab_score", "continuous"),
    ColumnSpec("admission_type", "categorical", categories=tuple(f"a{i}" for i in range(4))),
    ColumnSpec("stay_days", "integer"),
    ColumnSpec("readmitted", "integer", "target"),
)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _intercept_for_rate(logit: np.ndarray, rate: float) -> float:
    """Shift that makes the mean predicted probability equal ``rate``."""
    lo, hi = -30.0, 30.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _sigmoid(logit + mid).mean() < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def strong_signal(n: int = 8000, seed: int = 42) -> Table:
    """Two strongly informative features among eight, about 40% positives."""
    rng = np.random.default_rng(seed)
    age = np.clip(np.round(rng.normal(40, 13, n)), 17, 90)
    edu = np.clip(np.round(rng.normal(10, 2.6, n)), 1, 16)
    hours = np.clip(np.round(rng.normal(40, 12, n)), 1, 99)
    capital = rng.gamma(2.0, 1.0, n)
    workclass = rng.choice(6, n, p=[0.5, 0.15, 0.12, 0.1, 0.08, 0.05]).astype(float)
    marital = rng.choice(5, n, p=[0.45, 0.3, 0.12, 0.08, 0.05]).astype(float)
    region = rng.uniform(0, 1, n)
    tenure = np.floor(rng.uniform(0, 30, n))

    # capital index and marital status carry the signal; the rest is noise
    logit = 3.0 * (capital - 2.0) + np.where(marital == 0, 6.0, -3.0)
    y = (rng.uniform(size=n) < _sigmoid(logit + _intercept_for_rate(logit, 0.4))).astype(float)
    X = np.column_stack([age, edu, hours, capital, workclass, marital, region, tenure, y])
    return Table(STRONG_SCHEMA, X)


def weak_signal(n: int = 8000, seed: int = 42) -> Table:
    """About 11% positives, weakly coupled to the features."""
    rng = np.random.default_rng(seed)
    age = np.clip(np.round(rng.normal(62, 14, n)), 18, 95)
    visits = rng.poisson(1.2, n).astype(float)
    meds = np.clip(rng.poisson(15, n), 1, 60).astype(float)
    lab = rng.normal(0, 1, n)
    adm = rng.choice(4, n, p=[0.55, 0.2, 0.15, 0.1]).astype(float)
    stay = np.clip(rng.poisson(4, n), 1, 14).astype(float)
    logit = 0.25 * visits + 0.15 * lab + 0.02 * (meds - 15)
    y = (rng.uniform(size=n) < _sigmoid(logit + _intercept_for_rate(logit, 0.11))).astype(float)
    X = np.column_stack([age, visits, meds, lab, adm, stay, y])
    return Table(WEAK_SCHEMA, X)


GENERATORS = {"strong": strong_signal, "weak": weak_signal}
