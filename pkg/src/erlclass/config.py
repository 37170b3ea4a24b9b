"""Run configuration as nested dataclasses, loaded from a single JSON document."""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class ClassWeights:
    ER: float = 0.2
    MR: float = 0.5
    PM: float = 0.3

    def __post_init__(self):
        if min(self.ER, self.MR, self.PM) <= 0:
            raise ConfigError("class weights must be positive")

    def as_array(self):
        import numpy as np

        return np.array([self.ER, self.MR, self.PM], dtype=float)


@dataclass
class LrConfig:
    max_iter: int = 800
    C: float = 1.0
    tol: float = 1e-6


@dataclass
class MlpConfig:
    hidden: tuple = (256, 128)
    learning_rate: float = 0.01
    max_epochs: int = 800
    batch_size: int = 128
    patience: int = 20
    optimizer: str = "adam"


@dataclass
class GbdtConfig:
    n_rounds: int = 100
    l2: float = 10.0
    learning_rate: float = 0.01
    max_depth: int = 6
    min_samples_leaf: int = 20


@dataclass
class RfConfig:
    n_trees: int = 150
    max_depth: int = 7
    max_features: str | int = "sqrt"
    min_samples_leaf: int = 1


@dataclass
class ModelsConfig:
    lr: LrConfig = field(default_factory=LrConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    rf: RfConfig = field(default_factory=RfConfig)


@dataclass
class StayConfig:
    d_max: float = 200.0
    t_min: float = 1800.0


@dataclass
class ErlConfig:
    min_days: int = 10
    min_stays_per_day: int = 1


@dataclass
class CenterConfig:
    # Tianfu Square, Chengdu
    lon: float = 104.0657
    lat: float = 30.6570


@dataclass
class RiskConfig:
    w_cat: float = 0.4
    w_deg: float = 0.2
    w_flow: float = 0.2
    w_stay: float = 0.2
    cat_weight: dict = field(default_factory=lambda: {"ER": 1.0, "MR": 0.6, "PM": 0.3})


@dataclass
class EliminationConfig:
    importance_floor: float = 0.002
    batches: list | None = None
    model: str = "rf"


@dataclass
class SynthConfig:
    seed: int = 42
    n_er: int = 150
    n_mr: int = 30
    n_pm: int = 45
    n_unlabeled: int = 10
    start_date: str = "2023-05-01"
    n_days: int = 10
    city_radius: float = 30000.0
    raster_resolution: float = 20.0
    sample_interval_stay: float = 300.0
    sample_interval_move: float = 120.0
    truck_speed: float = 9.0
    trucks_per_pm: tuple = (4, 8)
    noise_stays_per_day: int = 40
    max_retries: int = 20000
    # per-subtype overrides of the site patterns, e.g. {"mixing": {"stay_min": [60, 90]}}
    patterns: dict | None = None

    def __post_init__(self):
        if min(self.n_er, self.n_mr, self.n_pm, self.n_unlabeled) < 0:
            raise ConfigError("ERL counts must be non-negative")
        if self.n_days * 2 < 2 or self.n_days < 1:
            raise ConfigError("study window must span at least 2 shifts")


@dataclass
class PathsConfig:
    traces: str | None = None
    pois: str | None = None
    raster: str | None = None
    registry: str | None = None


@dataclass
class RunConfig:
    seed: int = 42
    center: CenterConfig = field(default_factory=CenterConfig)
    tz_offset: float = 8.0
    stay: StayConfig = field(default_factory=StayConfig)
    erl: ErlConfig = field(default_factory=ErlConfig)
    poi_radius: float = 1000.0
    models: ModelsConfig = field(default_factory=ModelsConfig)
    split: tuple = (0.7, 0.1, 0.2)
    class_weights: ClassWeights = field(default_factory=ClassWeights)
    repeats: int = 5
    auroc: str = "ovr"
    risk: RiskConfig = field(default_factory=RiskConfig)
    elimination: EliminationConfig = field(default_factory=EliminationConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigError(f"split fractions must be three non-negative values summing to 1, got {self.split}")
        if self.auroc not in ("ovr", "ovo"):
            raise ConfigError("auroc must be 'ovr' or 'ovo'")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d, "")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys at {where or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, f"{where}{key}.")
        elif hint is tuple and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
