"""Acceptance criteria 1-12. Each test prints one PASS/FAIL line; the lines
are also collected into the pytest terminal summary."""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from verixanon.anonymizer import AdtInternal, AdtLeaf, build_adt, compute_root_hash, \
    iter_preorder, leaves_preorder
from verixanon.config import RunConfig
from verixanon.dataset import Table
from verixanon.experiments import run_bench, run_ksweep, run_matrix
from verixanon.fingerprint import compute_fingerprint, wasserstein_1d
from verixanon.models.trees import fit_gbdt
from verixanon.models.treeshap import brute_shapley, tree_shap
from verixanon.stats import PairedSeries, bootstrap_ci, cohens_d_paired, wilcoxon_exact
from verixanon.synthetic import strong_signal, weak_signal
from verixanon.verifier import evasion_probability

RESULTS: dict[int, str] = {}
CFG = RunConfig()

# eleven-point sweep: (k, TD F1, blind F1, TD WD, blind WD)
SWEEP = [
    (2, 0.6383, 0.5034, 0.1718, 0.3444), (3, 0.6597, 0.5092, 0.2221, 0.2772),
    (4, 0.6263, 0.5128, 0.2928, 0.2699), (5, 0.6420, 0.4929, 0.2962, 0.3686),
    (7, 0.5978, 0.5139, 0.2164, 0.3670), (10, 0.5472, 0.4297, 0.2784, 0.3778),
    (12, 0.5407, 0.4461, 0.4299, 0.3707), (15, 0.5660, 0.4044, 0.3453, 0.4173),
    (20, 0.5914, 0.4605, 0.2039, 0.4827), (25, 0.6085, 0.2370, 0.2347, 0.5250),
    (30, 0.5982, 0.3750, 0.2974, 0.4151),
]
F1 = PairedSeries([r[1] for r in SWEEP], [r[2] for r in SWEEP], tuple(r[0] for r in SWEEP))
WD = PairedSeries([r[3] for r in SWEEP], [r[4] for r in SWEEP], tuple(r[0] for r in SWEEP))


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def matrix_run():
    tables = {"strong": strong_signal(CFG.dataset_rows, CFG.seed),
              "weak": weak_signal(CFG.dataset_rows, CFG.seed)}
    t0 = time.perf_counter()
    first, _ = run_matrix(tables, CFG)
    return tables, first, time.perf_counter() - t0


def test_criterion_01_detection_matrix(matrix_run):
    _, rep, seconds = matrix_run
    s = rep["datasets"]["strong"]["scenarios"]
    w = rep["datasets"]["weak"]["scenarios"]
    checks = {
        "strong honest verified": s["honest"]["verdict"] == "verified",
        "strong lazy L2b": s["lazy"]["verdict"] != "verified" and "L2b" in s["lazy"]["triggered_layers"],
        "strong dumb L1": "L1" in s["dumb"]["triggered_layers"],
        "strong approximate only L3": s["approximate"]["triggered_layers"] == ["L3"],
        "weak approximate verified": w["approximate"]["verdict"] == "verified",
        "weak dumb L1": "L1" in w["dumb"]["triggered_layers"],
        "under 60 s": seconds < 60,
    }
    failed = [k for k, v in checks.items() if not v]
    report(1, not failed, f"{seconds:.1f}s; " + ("all scenarios as expected" if not failed
                                                  else f"failed: {failed}"))


def test_criterion_02_sentinel_evasion():
    closed = evasion_probability(13, 8413, 0.05)
    n_drop = int(0.05 * 8413)
    rng = np.random.default_rng(0)
    # sentinels hit by a uniform drop of n_drop rows out of 8413
    hits = rng.hypergeometric(13, 8413 - 13, n_drop, size=100_000)
    mc = float(np.mean(hits == 0))
    ok = 0.515 <= closed <= 0.525 and abs(mc - closed) <= 0.02
    report(2, ok, f"closed form {closed:.4f}, Monte-Carlo {mc:.4f}")


def test_criterion_03_wilcoxon():
    f1, wd = wilcoxon_exact(F1), wilcoxon_exact(WD)
    ok = (f1.statistic == 0 and round(f1.p_value, 6) == 0.000977
          and wd.statistic == 4.0 and round(wd.p_value, 6) == 0.006836)
    report(3, ok, f"F1 W={f1.statistic} p={f1.p_value:.6f}; WD W={wd.statistic} p={wd.p_value:.6f}")


def test_criterion_04_cohens_d():
    d_f1, d_wd = cohens_d_paired(F1), cohens_d_paired(WD)
    ok = abs(d_f1 - 1.9618) <= 1e-3 and abs(d_wd + 1.0228) <= 1e-3
    report(4, ok, f"F1 d={d_f1:.4f}, WD d={d_wd:.4f}")


def test_criterion_05_bootstrap_ci():
    gaps = F1.differences
    lo, hi = bootstrap_ci(gaps, 10_000, 0.95, CFG.seed)
    ok = abs(gaps.mean() - 0.1574) <= 1e-4 and abs(lo - 0.1203) <= 0.01 and abs(hi - 0.2079) <= 0.01
    report(5, ok, f"mean {gaps.mean():.4f}, CI [{lo:.4f}, {hi:.4f}]")


def test_criterion_06_k_anonymity():
    rng = np.random.default_rng(6)
    bad = 0
    runs = 0
    for _ in range(20):
        n = int(rng.integers(200, 800))
        X = np.column_stack([rng.normal(size=n), rng.integers(0, 5, n), rng.exponential(size=n)])
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-X[:, 0]))).astype(float)
        t = Table.from_arrays(X, y)
        for k in (2, 5, 10):
            counts = [leaf.count for leaf in leaves_preorder(build_adt(t, k))]
            runs += 1
            bad += min(counts) < 2 * k or sum(counts) != n
    report(6, bad == 0, f"{runs} trees, {bad} violations")


def _mutations(tree, rng):
    """One bound change, one split-value change and one child swap."""
    nodes = list(iter_preorder(tree))
    leaves = [n for n in nodes if isinstance(n, AdtLeaf)]
    internals = [n for n in nodes if isinstance(n, AdtInternal)]

    def rebuild(node, target, new):
        if node is target:
            return new
        if isinstance(node, AdtLeaf):
            return node
        return AdtInternal(node.feature, node.value, rebuild(node.left, target, new),
                           rebuild(node.right, target, new))

    leaf = leaves[rng.integers(len(leaves))]
    j = int(rng.integers(len(leaf.lo)))
    lo = list(leaf.lo)
    lo[j] -= 1e-5
    yield "bound", rebuild(tree, leaf, replace(leaf, lo=tuple(lo)))
    node = internals[rng.integers(len(internals))]
    yield "split", rebuild(tree, node, replace(node, value=node.value + 1e-5))
    yield "swap", rebuild(tree, node, replace(node, left=node.right, right=node.left))


def test_criterion_07_merkle_soundness():
    rng = np.random.default_rng(7)
    honest_ok, caught, total = 0, 0, 0
    for _ in range(100):
        n = int(rng.integers(60, 300))
        X = np.column_stack([rng.normal(size=n), rng.uniform(size=n), rng.integers(0, 9, n)])
        y = rng.integers(0, 2, n).astype(float)
        k = int(rng.integers(2, 5))
        tree = build_adt(Table.from_arrays(X, y), k)
        root = compute_root_hash(tree)
        honest_ok += root == compute_root_hash(build_adt(Table.from_arrays(X, y), k))
        if isinstance(tree, AdtLeaf):
            continue
        for _, mutated in _mutations(tree, rng):
            total += 1
            caught += compute_root_hash(mutated) != root
    report(7, honest_ok == 100 and caught == total,
           f"{honest_ok}/100 honest recomputations match; {caught}/{total} mutations change the root")


def test_criterion_08_tree_shap():
    rng = np.random.default_rng(8)
    worst, worst_acc = 0.0, 0.0
    for _ in range(200):
        p = int(rng.integers(1, 5))
        n = int(rng.integers(40, 120))
        X = rng.normal(size=(n, p))
        y = (X @ rng.normal(size=p) + rng.normal(0, 0.7, n) > 0).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        m = fit_gbdt(Table.from_arrays(X, y), n_estimators=int(rng.integers(1, 10)),
                     max_depth=int(rng.integers(1, 5)))
        rows = X[:3]
        fast = tree_shap(m, rows)
        for i, row in enumerate(rows):
            worst = max(worst, float(np.max(np.abs(fast.per_feature[i] - brute_shapley(m, row).per_feature))))
        worst_acc = max(worst_acc, float(np.max(np.abs(fast.total() - m.margin(rows)))))
    fp_errors = [compute_fingerprint(t, CFG.shap_subsample, CFG.seed).local_accuracy_error
                 for t in (strong_signal(3000, 8), weak_signal(3000, 8))]
    ok = worst <= 1e-9 and worst_acc < 1e-6 and max(fp_errors) < 1e-6
    report(8, ok, f"max |fast - brute| {worst:.1e}; local accuracy {worst_acc:.1e} (models), "
                  f"{max(fp_errors):.1e} (fingerprints)")


def _cdf_integral(p, q):
    xs = np.union1d(p, q)
    F = np.searchsorted(np.sort(p), xs, side="right") / len(p)
    G = np.searchsorted(np.sort(q), xs, side="right") / len(q)
    return float(np.sum(np.abs(F - G)[:-1] * np.diff(xs)))


def test_criterion_09_wasserstein():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        p = rng.normal(size=int(rng.integers(1, 60)))
        q = rng.normal(0.5, 2, size=int(rng.integers(1, 60)))
        worst = max(worst, abs(wasserstein_1d(p, q) - _cdf_integral(p, q)))
    axioms = True
    for _ in range(100):
        a, b, c = (rng.normal(rng.normal(), 1, size=int(rng.integers(1, 30))) for _ in range(3))
        axioms &= wasserstein_1d(a, a) == 0
        axioms &= abs(wasserstein_1d(a, b) - wasserstein_1d(b, a)) < 1e-12
        axioms &= wasserstein_1d(a, b) >= 0
        axioms &= wasserstein_1d(a, c) <= wasserstein_1d(a, b) + wasserstein_1d(b, c) + 1e-12
    report(9, worst <= 1e-6 and axioms, f"max gap to CDF integration {worst:.1e}; axioms hold: {axioms}")


def test_criterion_10_utility_gap():
    rep = run_ksweep(strong_signal(CFG.ksweep_rows, CFG.seed), CFG)
    rows = rep["rows"]
    losing = [r["k"] for r in rows if not r["td_f1"] > r["blind_f1"]]
    p = rep["summary"]["f1"]["wilcoxon_p"]
    ok = not losing and isinstance(p, float) and p < 0.01
    report(10, ok, f"TD F1 > blind F1 at {len(rows) - len(losing)}/{len(rows)} k values"
                   + (f" (not at k={losing})" if losing else "") + f"; Wilcoxon p={p}")


def test_criterion_11_scalability():
    rows = {r["n"]: r for r in run_bench([10_000, 100_000, 1_000_000], CFG.k, CFG, repeats=3)}
    total = rows[1_000_000]["total_s"]
    hash_ratio = rows[1_000_000]["hash_s"] / rows[100_000]["hash_s"]
    xai = [r["xai_s"] for r in rows.values()]
    xai_spread = max(xai) / min(xai) - 1
    ok = total < 3 and hash_ratio <= 20 and xai_spread < 0.25
    report(11, ok, f"n=1e6 total {total:.2f}s; hash 1e5->1e6 x{hash_ratio:.1f}; "
                   f"fingerprint spread {100 * xai_spread:.0f}%")


def test_criterion_12_determinism(matrix_run):
    tables, first, _ = matrix_run
    second, _ = run_matrix(tables, CFG)
    a = json.dumps(first, sort_keys=True).encode()
    b = json.dumps(second, sort_keys=True).encode()
    report(12, a == b, f"two matrix reports, {len(a)} bytes, identical: {a == b}")
