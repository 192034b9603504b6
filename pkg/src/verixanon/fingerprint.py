"""SHAP distribution fingerprints and their comparison by 1-D Wasserstein
distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anonymizer import GeneralizedTable, anonymize_table, flatten_midpoints
from .dataset import Table, stratified_indices, stratified_subsample
from .models.trees import fit_gbdt
from .models.treeshap import tree_shap

DEFAULT_EPSILON = 0.45
TOP_FEATURES = 3


class EmptySample(ValueError):
    pass


class FeatureMismatch(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class ShapFingerprint:
    features: tuple[str, ...]
    samples: np.ndarray                 # (len(features), n_rows) SHAP values
    mean_abs: tuple[float, ...] = ()
    local_accuracy_error: float = 0.0   # max |sum(phi) + base - margin|

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).reshape(len(self.features), -1)
        object.__setattr__(self, "samples", s)

    def sample(self, name: str) -> np.ndarray:
        return self.samples[self.features.index(name)]

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "samples": {f: self.sample(f).tolist() for f in self.features},
            "mean_abs": list(self.mean_abs),
            "local_accuracy_error": self.local_accuracy_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapFingerprint":
        feats = tuple(d["features"])
        return cls(
            feats,
            np.array([d["samples"][f] for f in feats], dtype=float),
            tuple(d.get("mean_abs", ())),
            float(d.get("local_accuracy_error", 0.0)),
        )


def compute_fingerprint(t: Table | GeneralizedTable, subsample_n: int = 2000, seed: int = 42,
                        features: list[str] | tuple[str, ...] | None = None,
                        model_params: dict | None = None) -> ShapFingerprint:
    """Fit boosted trees on a stratified subsample and keep the SHAP values of
    the top features by mean absolute attribution.

    With ``features`` given, those columns are reported in that order instead
    of the top-ranked ones; this is how a second table is compared against an
    existing fingerprint. ``model_params`` are passed on to :func:`fit_gbdt`.
    A generalized table is read at range midpoints.
    """
    names = t.qi_names
    if features is not None:
        missing = [f for f in features if f not in names]
        if missing:
            raise FeatureMismatch(f"table lacks fingerprint features {missing}")
    sub = t.take(stratified_indices(t.y, min(subsample_n, t.n_rows), seed))
    if isinstance(sub, GeneralizedTable):
        sub = flatten_midpoints(sub)
    model = fit_gbdt(sub, seed, **(model_params or {}))
    X = sub.X
    shap = tree_shap(model, X)
    err = float(np.max(np.abs(shap.total() - model.margin(X)))) if len(X) else 0.0
    mean_abs = np.abs(shap.per_feature).mean(axis=0)
    if features is None:
        # stable sort keeps the lower schema index first on ties
        order = np.argsort(-mean_abs, kind="stable")[:TOP_FEATURES]
    else:
        order = np.array([names.index(f) for f in features], dtype=int)
    return ShapFingerprint(
        tuple(names[i] for i in order),
        shap.per_feature[:, order].T.copy(),
        tuple(float(mean_abs[i]) for i in order),
        err,
    )


def wasserstein_1d(p, q) -> float:
    """Exact W1 between two empirical distributions.

    Integrates the gap between the two quantile functions. Breakpoints of the
    quantile functions sit at multiples of 1/len(p) and 1/len(q); scaled by
    len(p) * len(q) they become integers, so the merge is exact.
    """
    p = np.sort(np.asarray(p, dtype=float).ravel())
    q = np.sort(np.asarray(q, dtype=float).ravel())
    n, m = len(p), len(q)
    if n == 0 or m == 0:
        raise EmptySample("both samples must be non-empty")
    if n == m:
        return float(np.mean(np.abs(p - q)))
    cuts = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    widths = np.diff(cuts, prepend=0)
    ip = (cuts + m - 1) // m - 1
    iq = (cuts + n - 1) // n - 1
    return float(np.sum(widths * np.abs(p[ip] - q[iq])) / (n * m))


@dataclass(frozen=True)
class FingerprintComparison:
    per_feature_wd: dict[str, float]
    epsilon: float
    violated: bool

    @property
    def max_wd(self) -> float:
        return max(self.per_feature_wd.values(), default=0.0)


def compare_fingerprints(client: ShapFingerprint, cloud: ShapFingerprint,
                         epsilon: float = DEFAULT_EPSILON) -> FingerprintComparison:
    """Per-feature W1 over the client's features; violated if any exceeds ``epsilon``."""
    missing = [f for f in client.features if f not in cloud.features]
    if missing:
        raise FeatureMismatch(f"cloud fingerprint lacks {missing}")
    wd = {f: wasserstein_1d(client.sample(f), cloud.sample(f)) for f in client.features}
    return FingerprintComparison(wd, float(epsilon), any(v > epsilon for v in wd.values()))


def calibrate_epsilon(d: Table, k: int, margin: float = 0.1, seed: int = 42,
                      n_rows: int = 1000, subsample_n: int = 2000,
                      model_params: dict | None = None) -> float:
    """Largest per-feature W1 of an honest local run, inflated by ``margin``.

    An honest anonymization is run on a stratified sample of ``n_rows`` rows;
    its midpoint-flattened output is fingerprinted against the sample itself.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    sample = stratified_subsample(d, min(n_rows, d.n_rows), seed)
    client = compute_fingerprint(sample, subsample_n, seed, model_params=model_params)
    flat = flatten_midpoints(anonymize_table(sample, k))
    cloud = compute_fingerprint(flat, subsample_n, seed, client.features, model_params)
    return compare_fingerprints(client, cloud, np.inf).max_wd * (1.0 + margin)
