import json

import pytest

from verixanon.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATION, main


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"gbdt_trees": 15, "gbdt_max_depth": 3, "shap_subsample": 300,
                                "rf_trees": 5}))
    return str(path)


def test_prepare_cloud_verify(tmp_path, fast_config, monkeypatch):
    monkeypatch.setenv("VERIX_SALT_HEX", "00ff")
    prep = tmp_path / "prep"
    args = ["--config", fast_config, "--out-dir"]
    assert main(["prepare", "--synthetic", "strong", "--rows", "2000", *args, str(prep)]) == EXIT_OK
    first = (prep / "outsourced.csv").read_bytes()
    assert main(["prepare", "--synthetic", "strong", "--rows", "2000", *args, str(prep)]) == EXIT_OK
    assert (prep / "outsourced.csv").read_bytes() == first
    assert json.loads((prep / "manifest.json").read_text())["salt_hex"] == "00ff"

    for kind, code in (("honest", EXIT_OK), ("dumb", EXIT_VIOLATION)):
        bundle = tmp_path / kind
        assert main(["cloud", "--outsourced", str(prep / "outsourced.csv"), "--adversary", kind,
                     *args, str(bundle)]) == EXIT_OK
        assert main(["verify", "--bundle", str(bundle), "--manifest", str(prep / "manifest.json"),
                     *args, str(tmp_path / f"audit_{kind}")]) == code
    audit = json.loads((tmp_path / "audit_dumb" / "audit.json").read_text())
    assert audit["schema_version"] == 1 and "L1" in audit["triggered_layers"]

    (tmp_path / "honest" / "tree.json").write_text("{not json")
    assert main(["verify", "--bundle", str(tmp_path / "honest"),
                 "--manifest", str(prep / "manifest.json")]) == EXIT_ERROR


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["cloud", "--outsourced", "x.csv", "--adversary", "sneaky"])
    assert exc.value.code == 2
    assert main(["prepare", "--out-dir", str(tmp_path)]) == EXIT_ERROR
    bad = tmp_path / "bad.json"
    bad.write_text('{"k": 1}')
    assert main(["calibrate", "--synthetic", "strong", "--config", str(bad)]) == EXIT_ERROR


def test_prepare_from_csv(tmp_path, fast_config, monkeypatch):
    monkeypatch.delenv("VERIX_SALT_HEX", raising=False)
    from verixanon.synthetic import strong_signal
    from verixanon.dataset import schema_to_json
    t = strong_signal(500, 2)
    t.to_csv(tmp_path / "d.csv")
    schema = schema_to_json(t.schema)
    for c in schema:
        c.pop("categories", None)
        if c["kind"] == "categorical":
            c["kind"] = "integer"
    (tmp_path / "s.json").write_text(json.dumps(schema))
    assert main(["prepare", "--csv", str(tmp_path / "d.csv"), "--schema", str(tmp_path / "s.json"),
                 "--config", fast_config, "--epsilon", "0.3", "--out-dir", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "prepare.json").read_text())["summary"]
    assert summary["epsilon"] == 0.3 and summary["epsilon_source"] == "configured"


def test_bench_and_calibrate(tmp_path, fast_config):
    assert main(["bench", "--sizes", "1000", "--repeats", "1", "--config", fast_config,
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "bench.csv").read_text().startswith("n,k,leaves")
    assert main(["calibrate", "--synthetic", "weak", "--rows", "600", "--config", fast_config,
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "calibration.json").read_text())["epsilon"] > 0
