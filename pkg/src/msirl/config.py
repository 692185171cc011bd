"""Experiment configuration (single JSON document, explicit seeds)."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ArtifactError, ConfigError


@dataclass
class EnvironmentConfig:
    groups: int = 5
    rooms_per_group: int = 5
    room_size: float = 1.0
    door_width: float = 0.5
    path: Optional[str] = None  # load an Environment JSON instead of generating


@dataclass
class DynamicsConfig:
    name: str = "single_integrator"
    h: float = 0.1
    sigma: float = 1.0
    params: dict = field(default_factory=dict)


@dataclass
class SamplingConfig:
    per_room: int = 20
    seed: int = 0


@dataclass
class CostConfig:
    """State cost ``amplitude * (1 - exp(-|x - goal|^2 / (2 length^2)))``."""

    kind: str = "goal_well"
    goal: Optional[list] = None  # defaults to the center of the bounds
    amplitude: float = 1.0
    length: float = 2.25


@dataclass
class WaveletConfig:
    epsilon: float = 1e-4
    max_levels: int = 40


@dataclass
class DemoConfig:
    mode: str = "exact"
    scale: float = 1000.0
    n_transitions: int = 100_000
    seed: int = 0


@dataclass
class IrlConfig:
    start_level: Union[int, str] = "auto"
    end_level: int = 1
    augment_k: int = 0
    augment_level: Optional[int] = None  # defaults to end_level
    full_basis: bool = True
    tol: float = 1e-9
    max_iter: int = 200


@dataclass
class ControlConfig:
    enabled: bool = True
    k_rhc: int = 5
    t_end: float = 5.0
    dt: float = 0.01
    seed: int = 0
    x0: Optional[list] = None  # defaults to the sampled state with the largest true value


_SECTIONS = {
    "environment": EnvironmentConfig,
    "dynamics": DynamicsConfig,
    "sampling": SamplingConfig,
    "cost": CostConfig,
    "wavelets": WaveletConfig,
    "demos": DemoConfig,
    "irl": IrlConfig,
    "control": ControlConfig,
}


@dataclass
class ExperimentConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    truncation: float = 3.0
    cost: CostConfig = field(default_factory=CostConfig)
    wavelets: WaveletConfig = field(default_factory=WaveletConfig)
    demos: DemoConfig = field(default_factory=DemoConfig)
    irl: IrlConfig = field(default_factory=IrlConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    output_dir: str = "msirl_out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = {
            "dynamics.h": self.dynamics.h,
            "dynamics.sigma": self.dynamics.sigma,
            "sampling.per_room": self.sampling.per_room,
            "truncation": self.truncation,
            "wavelets.epsilon": self.wavelets.epsilon,
            "wavelets.max_levels": self.wavelets.max_levels,
            "demos.scale": self.demos.scale,
            "demos.n_transitions": self.demos.n_transitions,
            "irl.end_level": self.irl.end_level,
            "irl.tol": self.irl.tol,
            "irl.max_iter": self.irl.max_iter,
            "control.k_rhc": self.control.k_rhc,
            "control.t_end": self.control.t_end,
            "control.dt": self.control.dt,
            "cost.length": self.cost.length,
        }
        for name, val in positive.items():
            if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
                raise ConfigError(f"{name} must be positive, got {val!r}")
        for name, val in {"sampling.seed": self.sampling.seed, "demos.seed": self.demos.seed,
                          "control.seed": self.control.seed, "irl.augment_k": self.irl.augment_k}.items():
            if not isinstance(val, int) or isinstance(val, bool) or val < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {val!r}")
        if self.demos.mode not in ("exact", "sampled"):
            raise ConfigError(f"demos.mode must be 'exact' or 'sampled', got {self.demos.mode!r}")
        sl = self.irl.start_level
        if sl != "auto" and not (isinstance(sl, int) and sl >= self.irl.end_level):
            raise ConfigError("irl.start_level must be 'auto' or an integer >= end_level")
        if self.cost.kind != "goal_well":
            raise ConfigError(f"unknown cost kind {self.cost.kind!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, val in d.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = val
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            bad = set(val) - {f.name for f in dataclasses.fields(section)}
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            try:
                kwargs[key] = section(**val)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        return cls(**kwargs)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"missing config: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        doc.pop("schema", None)
        return cls.from_dict(doc)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path
