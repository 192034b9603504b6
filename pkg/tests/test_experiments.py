import json

import numpy as np
import pytest

from verixanon.config import RunConfig
from verixanon.experiments import derive_salt, run_bench, run_matrix, sweep_statistics, \
    synthetic_audit_case
from verixanon.synthetic import strong_signal, weak_signal

FAST = RunConfig(gbdt_trees=10, gbdt_max_depth=3, shap_subsample=200, calibration_rows=300,
                 rf_trees=5, bootstrap_resamples=1000)


def test_generators():
    s, w = strong_signal(4000, 1), weak_signal(4000, 1)
    assert abs(s.y.mean() - 0.4) < 0.03
    assert abs(w.y.mean() - 0.11) < 0.02
    assert np.array_equal(s.rows, strong_signal(4000, 1).rows)


def test_salt_is_stable():
    assert derive_salt(1, "a") == derive_salt(1, "a") != derive_salt(2, "a")


def test_matrix_small_is_reproducible():
    tables = {"strong": strong_signal(600, 1)}
    a, t = run_matrix(tables, FAST, ("honest", "dumb"))
    b, _ = run_matrix(tables, FAST, ("honest", "dumb"))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    scen = a["datasets"]["strong"]["scenarios"]
    assert scen["honest"]["verdict"] == "verified"
    assert "L1" in scen["dumb"]["triggered_layers"]
    assert set(t["strong"]) == {"prepare", "honest", "dumb"}


def test_empty_matrix():
    report, _ = run_matrix({}, FAST)
    assert report["datasets"] == {}


def test_sweep_statistics_handles_degenerate_series():
    rows = [{"k": k, "td_f1": 0.5, "blind_f1": 0.5, "td_wd": 0.1, "blind_wd": 0.2}
            for k in (2, 3, 4)]
    out = sweep_statistics(rows, FAST)
    assert out["f1"]["wilcoxon_p"].startswith("undefined")
    assert out["wd"]["mean_gap"] == pytest.approx(0.1)


def test_synthetic_audit_case_shape():
    result, manifest = synthetic_audit_case(2000, 5, 1, FAST)
    assert result.anonymized.leaf_ids.max() + 1 == 200
    assert manifest.sentinel_ids and manifest.twin_pairs


def test_bench_rows():
    rows = run_bench([1000], 5, FAST, repeats=1)
    assert rows[0]["n"] == 1000 and rows[0]["total_s"] > 0
