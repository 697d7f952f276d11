"""Experiment configuration and its JSON representation.

A config file is a JSON object whose sections mirror :class:`ExperimentConfig`;
missing keys take the defaults below.  Example::

    {
      "scenario": {"num_subcarriers": 32, "ue_speed_mps": 5.56},
      "geometry": {"bs_rows": 4, "bs_cols": 4, "ue_antennas": 1},
      "pilot": {"pilot_power_dbm": 10},
      "predictors": ["AL-FD", "SL-FD", "OUT"],
      "num_slots": 10,
      "train": {"epochs": 150},
      "sweep": {"axis": "N", "values": [10, 20, 40, 80]},
      "num_seeds": 5
    }
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel_model import ArrayGeometry, ScenarioConfig
from .estimation import PilotConfig
from .neural import TrainConfig

AXES = ("N", "spacing", "pilot_power", "speed", "p")
DEFAULT_PREDICTORS = ("AL-AD", "AL-FD", "SL-AD", "SL-FD", "OUT")


@dataclass(frozen=True)
class EvalConfig:
    gap_slots: int = 100
    eval_slots: int = 100

    def __post_init__(self):
        if self.gap_slots < 0:
            raise ValueError("gap_slots must be >= 0")
        if self.eval_slots < 1:
            raise ValueError("eval_slots must be >= 1")


@dataclass(frozen=True)
class RateSpec:
    num_ues: int = 5
    gamma_dbm: tuple[float, ...] = (0.0,)
    symbols_per_slot: int = 14
    betas: tuple[float, ...] = (0.16,)

    def __post_init__(self):
        object.__setattr__(self, "gamma_dbm", tuple(float(g) for g in self.gamma_dbm))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.betas or any(not 0 <= b <= 1 for b in self.betas):
            raise ValueError("betas must be a non-empty list within [0, 1]")
        if not self.gamma_dbm:
            raise ValueError("gamma_dbm must be non-empty")


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "N"
    values: tuple = (10, 20, 40, 80)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {AXES}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    pilot: PilotConfig = field(default_factory=PilotConfig)
    predictors: tuple[str, ...] = DEFAULT_PREDICTORS
    input_order: int = 2
    prediction_order: int = 1
    num_slots: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    rate: RateSpec | None = None
    sweep: SweepSpec = field(default_factory=SweepSpec)
    hidden: tuple[int, ...] | None = None
    correlation_window: int = 100
    master_seed: int = 0
    num_seeds: int = 5
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.num_slots <= self.input_order + self.prediction_order:
            raise ValueError(f"num_slots={self.num_slots} must exceed I + p = "
                             f"{self.input_order + self.prediction_order}")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")
        if not self.predictors:
            raise ValueError("at least one predictor is required")
        if self.pilot.subcarrier_spacing_hz != self.scenario.subcarrier_spacing_hz:
            raise ValueError("pilot and scenario subcarrier spacings differ")
        self.pilot.check(self.geometry)
        if self.rate is not None:
            if self.geometry.m_ue != 1:
                raise ValueError("sum-rate evaluation assumes single-antenna UEs (ue_antennas = 1)")
            if self.rate.num_ues > self.geometry.m_bs:
                raise ValueError(f"ZF needs num_ues <= M_BS, got {self.rate.num_ues} > {self.geometry.m_bs}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {"scenario": ScenarioConfig, "geometry": ArrayGeometry, "pilot": PilotConfig,
             "train": TrainConfig, "eval": EvalConfig, "rate": RateSpec, "sweep": SweepSpec}


def _build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    # the pilot's noise bandwidth follows the scenario unless set explicitly
    if "scenario" in data:
        spacing = data["scenario"].get("subcarrier_spacing_hz")
        if spacing is not None:
            data["pilot"] = {"subcarrier_spacing_hz": spacing, **(data.get("pilot") or {})}
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            section = data.pop(key)
            kwargs[key] = None if section is None else _build(cls, section)
    for key in ("predictors", "hidden"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    kwargs.update(data)
    return _build(ExperimentConfig, kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)
