"""Client-side audit of a cloud result against the trap manifest."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .anonymizer import AdtInternal, AdtLeaf, AnonymizationResult, MalformedTree, \
    compute_root_hash
from .fingerprint import DEFAULT_EPSILON, compare_fingerprints, compute_fingerprint
from .traps import TrapManifest

VERIFIED = "verified"
VIOLATION = "violation_detected"


@dataclass(frozen=True)
class HashCheck:
    passed: bool
    recomputed_hash: str
    reported_hash: str


@dataclass(frozen=True)
class SentinelCheck:
    passed: bool
    present_count: int
    expected_count: int
    missing_ids: list[str]
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TwinCheck:
    passed: bool
    consistent_count: int
    expected_count: int
    mismatched_pairs: list[list[str]]
    missing_pairs: list[list[str]]
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class XaiCheck:
    passed: bool
    per_feature_wd: dict[str, float]
    epsilon: float
    local_accuracy_error: float = 0.0


@dataclass(frozen=True)
class AuditReport:
    layer1: HashCheck
    layer2a: SentinelCheck
    layer2b: TwinCheck
    layer3: XaiCheck
    verdict: str
    triggered_layers: list[str]

    def to_dict(self) -> dict:
        return asdict(self)


def layer1_hash(result: AnonymizationResult) -> HashCheck:
    if not isinstance(result.tree, (AdtLeaf, AdtInternal)):
        raise MalformedTree("result carries no tree")
    recomputed = compute_root_hash(result.tree)
    return HashCheck(recomputed == result.root_hash, recomputed, result.root_hash)


def layer2a_sentinels(result: AnonymizationResult, manifest: TrapManifest) -> SentinelCheck:
    missing = sorted(t for t in manifest.sentinel_ids if t not in result.leaf_map)
    n = len(manifest.sentinel_ids)
    warn = [] if n else ["no sentinels in manifest; layer is vacuous"]
    return SentinelCheck(not missing, n - len(missing), n, missing, warn)


def layer2b_twins(result: AnonymizationResult, manifest: TrapManifest) -> TwinCheck:
    mismatched, missing = [], []
    for orig, twin in sorted(manifest.twin_pairs.items()):
        a, b = result.leaf_map.get(orig), result.leaf_map.get(twin)
        if a is None or b is None:
            missing.append([orig, twin])
        elif a != b:
            mismatched.append([orig, twin])
    n = len(manifest.twin_pairs)
    warn = [] if n else ["no twins in manifest; layer is vacuous"]
    ok = n - len(mismatched) - len(missing)
    return TwinCheck(ok == n, ok, n, mismatched, missing, warn)


def layer3_xai(result: AnonymizationResult, manifest: TrapManifest, epsilon: float,
               seed: int = 42, subsample_n: int = 2000,
               model_params: dict | None = None) -> XaiCheck:
    baseline = manifest.xai_baseline
    if baseline is None:
        raise ValueError("manifest has no fingerprint baseline")
    cloud = compute_fingerprint(result.anonymized, subsample_n, seed, baseline.features, model_params)
    cmp = compare_fingerprints(baseline, cloud, epsilon)
    return XaiCheck(not cmp.violated, cmp.per_feature_wd, float(epsilon), cloud.local_accuracy_error)


def aggregate_verdict(l1: HashCheck, l2a: SentinelCheck, l2b: TwinCheck, l3: XaiCheck) -> AuditReport:
    failed = [name for name, rec in (("L1", l1), ("L2a", l2a), ("L2b", l2b), ("L3", l3))
              if not rec.passed]
    return AuditReport(l1, l2a, l2b, l3, VIOLATION if failed else VERIFIED, failed)


def audit(result: AnonymizationResult, manifest: TrapManifest, epsilon: float | None = None,
          seed: int = 42, subsample_n: int = 2000, model_params: dict | None = None) -> AuditReport:
    if epsilon is None:
        epsilon = manifest.epsilon if manifest.epsilon is not None else DEFAULT_EPSILON
    return aggregate_verdict(
        layer1_hash(result),
        layer2a_sentinels(result, manifest),
        layer2b_twins(result, manifest),
        layer3_xai(result, manifest, epsilon, seed, subsample_n, model_params),
    )


def evasion_probability(sentinel_count: int, dataset_size: int, drop_fraction: float) -> float:
    """Chance that dropping ``drop_fraction`` of rows uniformly misses every sentinel."""
    if not 0 <= sentinel_count <= dataset_size or dataset_size <= 0:
        raise ValueError("need 0 <= sentinel_count <= dataset_size and a non-empty dataset")
    return float((1.0 - sentinel_count / dataset_size) ** (dataset_size * drop_fraction))
