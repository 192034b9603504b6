"""Simulated cloud behaviours, from honest to adversarial."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .anonymizer import MAX_DEPTH, AnonymizationResult, PublishedDataset, anonymize, blind_splitter

KINDS = ("honest", "lazy", "dumb", "approximate")


@dataclass(frozen=True)
class CloudProfile:
    kind: str = "honest"
    drop_fraction: float = 0.05
    blind_seed: int = 99
    drop_seed: int = 42
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cloud profile {self.kind!r}")
        if self.kind == "lazy" and not 0 < self.drop_fraction < 1:
            raise ValueError("drop_fraction must lie in (0, 1)")


def run_honest(ds: PublishedDataset, k: int, profile: CloudProfile | None = None) -> AnonymizationResult:
    return anonymize(ds, k, max_depth=(profile or CloudProfile()).max_depth)


def run_lazy(ds: PublishedDataset, k: int, profile: CloudProfile) -> AnonymizationResult:
    """Silently discard ``floor(drop_fraction * n)`` random rows, then behave honestly."""
    n_drop = int(np.floor(round(profile.drop_fraction * ds.n_rows, 9)))
    rng = np.random.default_rng(profile.drop_seed)
    return anonymize(ds.drop_rows(rng.choice(ds.n_rows, size=n_drop, replace=False)), k,
                     max_depth=profile.max_depth)


def _blind(ds: PublishedDataset, k: int, profile: CloudProfile) -> AnonymizationResult:
    return anonymize(ds, k, blind_splitter(profile.blind_seed), profile.max_depth)


def run_dumb(ds: PublishedDataset, k: int, profile: CloudProfile) -> AnonymizationResult:
    """Target-blind tree reported with a fabricated digest."""
    honest_looking = _blind(ds, k, profile)
    nonce = np.random.RandomState(profile.blind_seed).bytes(32)
    fake = hashlib.sha256(b"nonce|" + nonce).hexdigest()
    return AnonymizationResult(honest_looking.anonymized, honest_looking.tracker_ids,
                               honest_looking.leaf_map, fake, honest_looking.tree)


def run_approximate(ds: PublishedDataset, k: int, profile: CloudProfile) -> AnonymizationResult:
    """Target-blind tree with a correct digest of that tree."""
    return _blind(ds, k, profile)


def run_profile(ds: PublishedDataset, k: int, profile: CloudProfile) -> AnonymizationResult:
    if profile.kind == "honest":
        return run_honest(ds, k, profile)
    if profile.kind == "lazy":
        return run_lazy(ds, k, profile)
    if profile.kind == "dumb":
        return run_dumb(ds, k, profile)
    return run_approximate(ds, k, profile)
