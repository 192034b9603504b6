import json

import pytest

from verixanon.config import K_SWEEP, ConfigError, RunConfig


def test_defaults():
    cfg = RunConfig()
    assert (cfg.k, cfg.epsilon, cfg.shap_subsample) == (5, 0.45, 2000)
    assert (cfg.sentinel_ratio, cfg.twin_ratio, cfg.sentinel_band) == (0.02, 0.05, (0.45, 0.55))
    assert (cfg.rf_trees, cfg.rf_max_depth) == (50, 5)
    assert (cfg.gbdt_trees, cfg.gbdt_max_depth, cfg.gbdt_learning_rate) == (100, 6, 0.1)
    assert (cfg.adt_max_depth, cfg.bootstrap_resamples, cfg.delta, cfg.seed) == (50, 10_000, 0.05, 42)
    assert cfg.k_sweep == K_SWEEP == (2, 3, 4, 5, 7, 10, 12, 15, 20, 25, 30)


def test_round_trip(tmp_path):
    cfg = RunConfig(k=7, sentinel_band=[0.4, 0.6])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path) == cfg


@pytest.mark.parametrize("bad", [{"k": 1}, {"epsilon": 0}, {"sentinel_band": [0.6, 0.4]},
                                 {"delta": 1.0}, {"k_sweep": [1, 2]}, {"bootstrap_resamples": 10}])
def test_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_unknown_key_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"kk": 3})
    path = tmp_path / "c.json"
    path.write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(path)


def test_override_ignores_none():
    assert RunConfig().override(k=None, seed=3) == RunConfig(seed=3)
