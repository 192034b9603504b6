"""End-to-end runs: client preparation, cloud execution, audit, the detection
matrix, the k-sweep and the verification benchmark."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .adversaries import KINDS, CloudProfile, run_profile
from .anonymizer import AdtInternal, AdtLeaf, AnonymizationResult, GeneralizedTable, \
    PublishedDataset, anonymize_table, blind_splitter, compute_root_hash, flatten_midpoints
from .config import RunConfig
from .dataset import Table, train_test_split
from .fingerprint import calibrate_epsilon, compare_fingerprints, compute_fingerprint
from .models.trees import fit_gbdt
from .stats import PairedSeries, bootstrap_ci, cohens_d_paired, f1_score, wilcoxon_exact
from .synthetic import strong_signal
from .traps import OutsourcedDataset, TrapManifest, assemble_outsourced, fit_boundary_forest, \
    generate_sentinels, generate_twins, sentinel_cap
from .verifier import AuditReport, audit, layer1_hash, layer2a_sentinels, layer2b_twins, layer3_xai

SCHEMA_VERSION = 1


def model_params(cfg: RunConfig) -> dict:
    return {"n_estimators": cfg.gbdt_trees, "max_depth": cfg.gbdt_max_depth,
            "learning_rate": cfg.gbdt_learning_rate}


def derive_salt(seed: int, label: str) -> bytes:
    """Reproducible salt for experiments; real deployments use a random one."""
    return hashlib.sha256(f"experiment-salt|{seed}|{label}".encode()).digest()


@dataclass(frozen=True, eq=False)
class PreparedClient:
    outsourced: OutsourcedDataset
    manifest: TrapManifest
    summary: dict


def prepare(table: Table, cfg: RunConfig, salt: bytes) -> PreparedClient:
    """Plant traps, fingerprint the clean table and fix the audit threshold."""
    forest = fit_boundary_forest(table, cfg.seed, cfg.rf_subsample, cfg.rf_trees, cfg.rf_max_depth)
    sentinels = generate_sentinels(table, forest, sentinel_cap(table.n_rows, cfg.sentinel_ratio),
                                   cfg.seed, cfg.sentinel_band, cfg.perturb_scale)
    twins = generate_twins(table, cfg.twin_ratio, cfg.seed)
    outsourced, manifest = assemble_outsourced(table, sentinels, twins, salt, cfg.seed)
    params = model_params(cfg)
    baseline = compute_fingerprint(table, cfg.shap_subsample, cfg.seed, model_params=params)
    if cfg.calibrate:
        epsilon = calibrate_epsilon(table, cfg.k, cfg.calibration_margin, cfg.seed,
                                    cfg.calibration_rows, cfg.shap_subsample, params)
    else:
        epsilon = cfg.epsilon
    manifest = manifest.with_baseline(baseline, epsilon)
    n_traps = len(sentinels.rows) + len(twins)
    summary = {
        "genuine_rows": table.n_rows,
        "boundary_candidates": sentinels.n_candidates,
        "sentinels": len(sentinels.rows),
        "twins": len(twins),
        "outsourced_rows": outsourced.n_rows,
        "trap_ratio": n_traps / outsourced.n_rows,
        "epsilon": epsilon,
        "epsilon_source": "calibrated" if cfg.calibrate else "configured",
        "fingerprint_features": list(baseline.features),
        "warnings": list(manifest.warnings),
    }
    return PreparedClient(outsourced, manifest, summary)


def cloud_profile(cfg: RunConfig, kind: str) -> CloudProfile:
    return CloudProfile(kind, cfg.delta, cfg.blind_seed, cfg.seed, cfg.adt_max_depth)


def run_cloud(published: PublishedDataset, cfg: RunConfig, kind: str) -> AnonymizationResult:
    return run_profile(published, cfg.k, cloud_profile(cfg, kind))


def verify(result: AnonymizationResult, manifest: TrapManifest, cfg: RunConfig,
           epsilon: float | None = None) -> AuditReport:
    return audit(result, manifest, epsilon, cfg.seed, cfg.shap_subsample, model_params(cfg))


def audit_summary(report: AuditReport) -> dict:
    return {
        "verdict": report.verdict,
        "triggered_layers": report.triggered_layers,
        "layer1": {"pass": report.layer1.passed},
        "layer2a": {"pass": report.layer2a.passed, "present": report.layer2a.present_count,
                    "expected": report.layer2a.expected_count},
        "layer2b": {"pass": report.layer2b.passed, "consistent": report.layer2b.consistent_count,
                    "expected": report.layer2b.expected_count,
                    "missing_pairs": len(report.layer2b.missing_pairs),
                    "mismatched_pairs": len(report.layer2b.mismatched_pairs)},
        "layer3": {"pass": report.layer3.passed, "per_feature_wd": report.layer3.per_feature_wd,
                   "epsilon": report.layer3.epsilon},
    }


def run_matrix(datasets: dict[str, Table], cfg: RunConfig,
               kinds: tuple[str, ...] = KINDS) -> tuple[dict, dict]:
    """Every (dataset, cloud profile) scenario. Returns the report and, kept
    apart so the report stays reproducible, wall-clock timings."""
    report = {"schema_version": SCHEMA_VERSION, "kind": "detection_matrix",
              "config": cfg.to_dict(), "datasets": {}}
    timings: dict[str, dict[str, float]] = {}
    for name, table in datasets.items():
        t0 = time.perf_counter()
        client = prepare(table, cfg, derive_salt(cfg.seed, name))
        timings[name] = {"prepare": time.perf_counter() - t0}
        published = client.outsourced.published()
        scenarios = {}
        for kind in kinds:
            t0 = time.perf_counter()
            result = run_cloud(published, cfg, kind)
            scenarios[kind] = audit_summary(verify(result, client.manifest, cfg))
            timings[name][kind] = time.perf_counter() - t0
        report["datasets"][name] = {"preparation": client.summary, "scenarios": scenarios}
    return report, timings


# --------------------------------------------------------------------------
# utility sweep


def _utility(train: Table, test: Table, g: GeneralizedTable, client, cfg: RunConfig):
    flat = flatten_midpoints(g)
    params = model_params(cfg)
    model = fit_gbdt(flat, cfg.seed, **params)
    f1 = f1_score(model.predict_proba(test.X) >= 0.5, test.y)
    cloud = compute_fingerprint(flat, cfg.shap_subsample, cfg.seed, client.features, params)
    wd = compare_fingerprints(client, cloud, np.inf).per_feature_wd
    return f1, float(np.mean(list(wd.values())))


def run_ksweep(table: Table, cfg: RunConfig) -> dict:
    """Target-driven versus blind anonymization across ``cfg.k_sweep``.

    A stratified ``test_fraction`` of raw rows is held out; the rest is
    anonymized, boosted trees are trained on the midpoint-flattened output and
    F1 is measured on the raw held-out rows.
    """
    train, test = train_test_split(table, cfg.test_fraction, cfg.seed)
    client = compute_fingerprint(train, cfg.shap_subsample, cfg.seed, model_params=model_params(cfg))
    rows = []
    for k in cfg.k_sweep:
        td_f1, td_wd = _utility(train, test, anonymize_table(train, k, max_depth=cfg.adt_max_depth),
                                client, cfg)
        blind = anonymize_table(train, k, blind_splitter(cfg.blind_seed), cfg.adt_max_depth)
        bl_f1, bl_wd = _utility(train, test, blind, client, cfg)
        rows.append({"k": k, "td_f1": td_f1, "blind_f1": bl_f1, "f1_gap": td_f1 - bl_f1,
                     "td_wd": td_wd, "blind_wd": bl_wd, "wd_gap": bl_wd - td_wd})
    return {"schema_version": SCHEMA_VERSION, "kind": "k_sweep", "config": cfg.to_dict(),
            "protocol": "holdout raw test split; train on midpoint-flattened anonymized rows",
            "fingerprint_features": list(client.features),
            "rows": rows, "summary": sweep_statistics(rows, cfg)}


def _safe(fn, *args):
    try:
        return fn(*args)
    except ValueError as e:
        return f"undefined: {e}"


def sweep_statistics(rows: list[dict], cfg: RunConfig) -> dict:
    labels = tuple(r["k"] for r in rows)
    f1 = PairedSeries([r["td_f1"] for r in rows], [r["blind_f1"] for r in rows], labels)
    wd = PairedSeries([r["td_wd"] for r in rows], [r["blind_wd"] for r in rows], labels)
    out = {}
    for name, series, gaps in (("f1", f1, f1.differences), ("wd", wd, -wd.differences)):
        w = _safe(wilcoxon_exact, series)
        out[name] = {
            "wilcoxon_w": w if isinstance(w, str) else w.statistic,
            "wilcoxon_p": w if isinstance(w, str) else w.p_value,
            "cohens_d": _safe(cohens_d_paired, series),
            "mean_gap": float(np.mean(gaps)),
            "ci95": list(bootstrap_ci(gaps, cfg.bootstrap_resamples, 0.95, cfg.seed)),
        }
    return out


# --------------------------------------------------------------------------
# verification benchmark


def _balanced_tree(leaves: list[AdtLeaf], split_values: np.ndarray, feature: str):
    def build(a: int, b: int):
        if b - a == 1:
            return leaves[a]
        mid = (a + b) // 2
        return AdtInternal(feature, float(split_values[mid - 1]), build(a, mid), build(mid, b))

    return build(0, len(leaves))


def synthetic_audit_case(n: int, k: int, seed: int, cfg: RunConfig):
    """A cloud result over ``n`` rows with ``n / 2k`` leaves, built directly
    (rows sorted on one column and cut into blocks of ``2k``) so that large
    sizes are cheap to set up. Returns (result, manifest)."""
    table = strong_signal(n, seed)
    X = table.X
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    starts = np.arange(0, n - 2 * k + 1, 2 * k)
    lo = np.minimum.reduceat(Xs, starts, axis=0)
    hi = np.maximum.reduceat(Xs, starts, axis=0)
    counts = np.diff(np.append(starts, n))
    names = table.qi_names
    names = tuple(names)
    leaves = [AdtLeaf(int(c), names, tuple(l), tuple(h))
              for c, l, h in zip(counts.tolist(), lo.tolist(), hi.tolist())]
    tree = _balanced_tree(leaves, hi[:, 0], names[0])

    leaf_of_sorted = np.repeat(np.arange(len(starts)), counts)
    leaf_ids = np.empty(n, dtype=np.int64)
    leaf_ids[order] = leaf_of_sorted
    tids = [f"{i:064x}" for i in range(n)]
    g = GeneralizedTable(table.schema, lo[leaf_ids], hi[leaf_ids], table.y.copy(), leaf_ids)
    result = AnonymizationResult(g, tuple(tids), dict(zip(tids, leaf_ids.tolist())),
                                 compute_root_hash(tree), tree)

    rng = np.random.default_rng(seed)
    sentinel_idx = rng.choice(n, size=int(np.ceil(cfg.sentinel_ratio * n)), replace=False)
    sentinel_set = set(sentinel_idx.tolist())
    # twins pair adjacent sorted rows inside the same block
    first = order[starts[: max(1, int(cfg.twin_ratio * n))] % n]
    second = order[(starts[: len(first)] + 1) % n]
    twin_pairs = {tids[a]: tids[b] for a, b in zip(first, second) if a not in sentinel_set}
    sentinels = frozenset(tids[i] for i in sentinel_idx) - set(twin_pairs) - set(twin_pairs.values())
    baseline = compute_fingerprint(table, cfg.shap_subsample, cfg.seed, model_params=model_params(cfg))
    manifest = TrapManifest(b"bench", sentinels, twin_pairs, baseline, cfg.epsilon)
    return result, manifest


def _best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(sizes, k: int, cfg: RunConfig, repeats: int = 3) -> list[dict]:
    """Per-component client verification time at each dataset size."""
    out = []
    params = model_params(cfg)
    for n in sizes:
        result, manifest = synthetic_audit_case(int(n), k, cfg.seed, cfg)
        t_hash = _best_of(lambda: layer1_hash(result), repeats)
        t_sent = _best_of(lambda: layer2a_sentinels(result, manifest), repeats)
        t_twin = _best_of(lambda: layer2b_twins(result, manifest), repeats)
        t_xai = _best_of(lambda: layer3_xai(result, manifest, cfg.epsilon, cfg.seed,
                                            cfg.shap_subsample, params), repeats)
        out.append({"n": int(n), "k": k, "leaves": int(result.anonymized.leaf_ids.max() + 1),
                    "hash_s": t_hash, "sentinel_s": t_sent, "twin_s": t_twin, "xai_s": t_xai,
                    "total_s": t_hash + t_sent + t_twin + t_xai})
    return out
