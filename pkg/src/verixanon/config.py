"""Run configuration with validated defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

K_SWEEP = (2, 3, 4, 5, 7, 10, 12, 15, 20, 25, 30)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    k: int = 5
    epsilon: float = 0.45
    shap_subsample: int = 2000
    sentinel_ratio: float = 0.02
    twin_ratio: float = 0.05
    sentinel_band: tuple[float, float] = (0.45, 0.55)
    perturb_scale: float = 0.05
    rf_trees: int = 50
    rf_max_depth: int = 5
    rf_subsample: float = 0.1
    gbdt_trees: int = 100
    gbdt_max_depth: int = 6
    gbdt_learning_rate: float = 0.1
    adt_max_depth: int = 50
    bootstrap_resamples: int = 10_000
    delta: float = 0.05
    k_sweep: tuple[int, ...] = K_SWEEP
    seed: int = 42
    blind_seed: int = 99
    dataset_rows: int = 8000
    calibrate: bool = True
    calibration_rows: int = 1000
    calibration_margin: float = 0.1
    test_fraction: float = 0.2
    ksweep_rows: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "sentinel_band", tuple(float(v) for v in self.sentinel_band))
        object.__setattr__(self, "k_sweep", tuple(int(v) for v in self.k_sweep))
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        need(self.k >= 2, "k must be >= 2")
        need(self.epsilon > 0, "epsilon must be positive")
        need(self.shap_subsample >= 10, "shap_subsample must be >= 10")
        need(0 < self.sentinel_ratio < 1, "sentinel_ratio must lie in (0, 1)")
        need(0 < self.twin_ratio <= 1, "twin_ratio must lie in (0, 1]")
        lo, hi = self.sentinel_band
        need(len(self.sentinel_band) == 2 and 0 <= lo <= hi <= 1, "sentinel_band must be [lo, hi] in [0, 1]")
        need(self.perturb_scale >= 0, "perturb_scale must be non-negative")
        need(self.rf_trees >= 1 and self.rf_max_depth >= 1, "forest needs trees and depth")
        need(0 < self.rf_subsample <= 1, "rf_subsample must lie in (0, 1]")
        need(self.gbdt_trees >= 1 and self.gbdt_max_depth >= 1, "boosting needs trees and depth")
        need(0 < self.gbdt_learning_rate <= 1, "gbdt_learning_rate must lie in (0, 1]")
        need(self.adt_max_depth >= 1, "adt_max_depth must be >= 1")
        need(self.bootstrap_resamples >= 1000, "bootstrap_resamples must be >= 1000")
        need(0 < self.delta < 1, "delta must lie in (0, 1)")
        need(len(self.k_sweep) > 0 and min(self.k_sweep) >= 2, "k_sweep values must be >= 2")
        need(self.dataset_rows >= 10, "dataset_rows must be >= 10")
        need(self.calibration_rows >= 10, "calibration_rows must be >= 10")
        need(self.calibration_margin >= 0, "calibration_margin must be non-negative")
        need(0 < self.test_fraction < 1, "test_fraction must lie in (0, 1)")
        need(self.ksweep_rows >= 10, "ksweep_rows must be >= 10")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sentinel_band"] = list(self.sentinel_band)
        d["k_sweep"] = list(self.k_sweep)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})
