"""Client-side trap preparation: boundary sentinels, exact twins, salted
tracker ids and the confidential manifest that records them."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .anonymizer import PublishedDataset
from .canonical import canonical_numbers, round6
from .dataset import Table, read_columns, stratified_subsample, write_csv
from .fingerprint import ShapFingerprint
from .models.trees import ForestModel, fit_forest, predict_proba

ROLES = ("genuine", "sentinel", "twin")
TRACKER_COLUMN = "tracker_id"


class DuplicateTrackerID(ValueError):
    pass


class NoBoundaryCandidates(UserWarning):
    pass


def compute_tracker_id(salt: bytes, role: str, index: int, row) -> str:
    """SHA-256 hex of ``salt|role|index|f1,f2,...`` with 6-decimal features."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    features = ",".join(canonical_numbers(np.atleast_1d(row)))
    return hashlib.sha256(salt + f"|{role}|{index}|{features}".encode()).hexdigest()


# --------------------------------------------------------------------------
# sentinels


@dataclass(frozen=True)
class SentinelBatch:
    rows: np.ndarray            # full rows (QI + target) after perturbation
    source_index: np.ndarray    # row of the source table each sentinel came from
    n_candidates: int


def fit_boundary_forest(d: Table, seed: int, fraction: float = 0.1,
                        n_trees: int = 50, max_depth: int = 5) -> ForestModel:
    """Forest trained on a stratified ``fraction`` of ``d``."""
    n = max(10, int(np.floor(fraction * d.n_rows + 0.5)))
    return fit_forest(stratified_subsample(d, min(n, d.n_rows), seed), seed, n_trees, max_depth)


def boundary_candidates(d: Table, forest: ForestModel, band=(0.45, 0.55)) -> np.ndarray:
    p = predict_proba(forest, d.X)
    return np.flatnonzero((p >= band[0]) & (p <= band[1]))


def sentinel_cap(n_rows: int, rate: float = 0.02) -> int:
    return int(np.ceil(round(rate * n_rows, 9)))


def generate_sentinels(d: Table, forest: ForestModel, max_count: int, seed: int,
                       band=(0.45, 0.55), noise_scale: float = 0.05) -> SentinelBatch:
    """Perturbed copies of up to ``max_count`` rows whose forest probability
    lies in ``band``.

    Numeric QI columns get Gaussian noise with standard deviation
    ``noise_scale`` times the column's population std, clipped to the column
    range; integer columns are then rounded. Categoricals and the target are
    copied from the source row.
    """
    cand = boundary_candidates(d, forest, band)
    rng = np.random.default_rng(seed)
    if len(cand) > max_count:
        cand = np.sort(rng.choice(cand, size=max_count, replace=False))
    if len(cand) == 0:
        warnings.warn("no rows fall inside the boundary band; no sentinels generated",
                      NoBoundaryCandidates, stacklevel=2)
    rows = np.array(d.rows[cand], dtype=float)
    for j in d.qi_indices:
        col = d.schema[j]
        if not col.numeric:
            continue
        full = np.asarray(d.rows[:, j], dtype=float)
        sigma = full.std()
        noisy = rows[:, j] + rng.normal(0.0, noise_scale * sigma, size=len(cand))
        noisy = np.clip(noisy, full.min(), full.max())
        if col.kind == "integer":
            noisy = np.copysign(np.floor(np.abs(noisy) + 0.5), noisy) + 0.0
        rows[:, j] = noisy
    n_candidates = len(boundary_candidates(d, forest, band))
    return SentinelBatch(rows, cand, n_candidates)


# --------------------------------------------------------------------------
# twins


def twin_count(n_rows: int, rate: float) -> int:
    return int(np.floor(round(rate * n_rows, 9)))


def generate_twins(d: Table, rate: float, seed: int) -> list[tuple[int, np.ndarray]]:
    """Exact copies of ``floor(rate * N)`` genuine rows chosen by ``seed``."""
    if not 0 < rate <= 1:
        raise ValueError("twin rate must lie in (0, 1]")
    idx = np.sort(np.random.default_rng(seed).choice(d.n_rows, size=twin_count(d.n_rows, rate),
                                                      replace=False))
    return [(int(i), np.array(d.rows[i], dtype=float)) for i in idx]


# --------------------------------------------------------------------------
# assembly and manifest


@dataclass(frozen=True, eq=False)
class OutsourcedDataset:
    table: Table
    tracker_ids: tuple[str, ...]
    roles: tuple[str, ...] = field(repr=False)  # client-side only

    def published(self) -> PublishedDataset:
        return PublishedDataset(self.table, self.tracker_ids)

    @property
    def n_rows(self) -> int:
        return self.table.n_rows


@dataclass(frozen=True, eq=False)
class TrapManifest:
    salt: bytes
    sentinel_ids: frozenset[str]
    twin_pairs: dict[str, str]          # original tracker id -> twin tracker id
    xai_baseline: ShapFingerprint | None = None
    epsilon: float | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.twin_pairs.values())) != len(self.twin_pairs):
            raise ValueError("twin pair map must be injective")
        twin_ids = set(self.twin_pairs) | set(self.twin_pairs.values())
        if self.sentinel_ids & twin_ids:
            raise ValueError("sentinel ids overlap twin ids")

    def with_baseline(self, fp: ShapFingerprint, epsilon: float | None = None) -> "TrapManifest":
        return replace(self, xai_baseline=fp, epsilon=self.epsilon if epsilon is None else epsilon)

    def to_dict(self) -> dict:
        d = {
            "salt_hex": self.salt.hex(),
            "sentinel_ids": sorted(self.sentinel_ids),
            "twin_pairs": dict(sorted(self.twin_pairs.items())),
            "xai_baseline": None if self.xai_baseline is None else self.xai_baseline.to_dict(),
        }
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        if self.warnings:
            d["warnings"] = list(self.warnings)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrapManifest":
        fp = d.get("xai_baseline")
        return cls(
            salt=bytes.fromhex(d["salt_hex"]),
            sentinel_ids=frozenset(d["sentinel_ids"]),
            twin_pairs=dict(d["twin_pairs"]),
            xai_baseline=None if fp is None else ShapFingerprint.from_dict(fp),
            epsilon=d.get("epsilon"),
            warnings=tuple(d.get("warnings", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrapManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def assemble_outsourced(d: Table, sentinels: SentinelBatch | np.ndarray | None,
                        twins: list[tuple[int, np.ndarray]], salt: bytes,
                        seed: int) -> tuple[OutsourcedDataset, TrapManifest]:
    """Concatenate genuine rows, sentinels and twins, tag every row with a
    tracker id and shuffle.

    Tracker ids use the row's position in the unshuffled concatenation, so
    they are independent of the shuffle.
    """
    s_rows = getattr(sentinels, "rows", sentinels)
    s_rows = np.empty((0, len(d.schema))) if s_rows is None else np.asarray(s_rows, float)
    s_rows = s_rows.reshape(-1, len(d.schema))
    t_rows = np.array([r for _, r in twins], dtype=float).reshape(-1, len(d.schema))
    rows = np.vstack([np.asarray(d.rows, dtype=float), s_rows, t_rows])
    roles = ["genuine"] * d.n_rows + ["sentinel"] * len(s_rows) + ["twin"] * len(t_rows)

    qi = d.qi_indices
    feats = round6(rows[:, qi])
    tids = [
        hashlib.sha256(salt + f"|{role}|{i}|{','.join('%.6f' % v for v in f)}".encode()).hexdigest()
        for i, (role, f) in enumerate(zip(roles, feats.tolist()))
    ]
    if len(set(tids)) != len(tids):
        raise DuplicateTrackerID("two rows produced the same tracker id")

    n_gen, n_sent = d.n_rows, len(s_rows)
    sentinel_ids = frozenset(tids[n_gen:n_gen + n_sent])
    twin_pairs = {tids[src]: tids[n_gen + n_sent + k] for k, (src, _) in enumerate(twins)}
    warn = () if n_sent else ("no sentinels: boundary band was empty",)

    perm = np.random.default_rng(seed).permutation(len(rows))
    out = OutsourcedDataset(
        Table(d.schema, rows[perm]),
        tuple(tids[i] for i in perm),
        tuple(roles[i] for i in perm),
    )
    return out, TrapManifest(salt, sentinel_ids, twin_pairs, warnings=warn)


def write_outsourced_csv(path: str | Path, ds: PublishedDataset | OutsourcedDataset) -> None:
    write_csv(path, ds.table, {TRACKER_COLUMN: list(ds.tracker_ids)})


def read_outsourced_csv(path: str | Path, schema) -> PublishedDataset:
    header, body = read_columns(path)
    names = [c.name for c in schema]
    if header != names + [TRACKER_COLUMN]:
        raise ValueError(f"unexpected outsourced header {header}")
    rows = np.array([[float(v) for v in r[:-1]] for r in body], dtype=float).reshape(-1, len(names))
    return PublishedDataset(Table(tuple(schema), rows), tuple(r[-1] for r in body))
