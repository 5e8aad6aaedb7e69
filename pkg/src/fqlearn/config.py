"""Run configuration: a YAML file validated against a closed schema.

Unknown keys anywhere in the file are rejected. Every hyperparameter the
method leaves open has a default here.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .envs.battle import BattleConfig
from .envs.squeeze import SqueezeConfig
from .errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EpsilonSchedule(_Strict):
    start: float = Field(1.0, ge=0.0, le=1.0)
    end: float = Field(0.05, ge=0.0, le=1.0)
    decay_steps: int = Field(1000, ge=0)

    def value(self, t: int) -> float:
        """Linear decay from ``start`` to ``end`` over ``decay_steps``; flat afterwards."""
        if self.decay_steps == 0 or t >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * t / self.decay_steps


class NetworkSettings(_Strict):
    kind: Literal["mlp", "conv"] = "mlp"
    hidden: list[int] = Field(default_factory=lambda: [64, 64])
    conv_channels: list[int] = Field(default_factory=lambda: [16, 16])
    kernel: int = 3

    @field_validator("hidden")
    @classmethod
    def _positive(cls, v):
        if not v or any(h < 1 for h in v):
            raise ValueError("hidden widths must be positive and non-empty")
        return v


class OptimizerSettings(_Strict):
    algorithm: Literal["sgd", "adam"] = "adam"
    lr: float = Field(1e-4, ge=0.0)
    max_grad_norm: Optional[float] = Field(None, gt=0.0)


class FqlSettings(_Strict):
    lam: float = Field(1.0, ge=0.0)
    embed_dim: int = Field(32, ge=1)


class MfqSettings(_Strict):
    exploration: Literal["boltzmann", "epsilon"] = "boltzmann"
    temperature: float = Field(1.0, gt=0.0)


class SqueezeSettings(_Strict):
    n_agents: int = Field(100, ge=1)
    targets: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 100.0), (400.0, 200.0)])

    def build(self) -> SqueezeConfig:
        return SqueezeConfig(self.n_agents, tuple(self.targets))


class BattleSettings(_Strict):
    width: int = 30
    height: int = 30
    n_per_army: int = 16
    view: int = 13
    max_hp: float = 10.0
    damage: float = 2.0
    step_reward: float = -0.005
    hit_reward: float = 0.2
    kill_reward: float = 5.0
    death_reward: float = -0.1
    empty_attack_reward: float = -0.1
    max_steps: int = 200
    spawn_gap: int = 6
    allow_idle: bool = False

    def build(self, radius) -> BattleConfig:
        r = 13 if radius == "all" else int(radius)
        return BattleConfig(neighbor_radius=r, **self.model_dump())


class RunConfig(_Strict):
    algorithm: Literal["fql", "iql", "diql", "mfq"] = "fql"
    environment: Literal["squeeze", "battle"] = "squeeze"
    seed: int = 0
    gamma: float = Field(0.95, ge=0.0, lt=1.0)
    epsilon: EpsilonSchedule = Field(default_factory=EpsilonSchedule)
    fql: FqlSettings = Field(default_factory=FqlSettings)
    mfq: MfqSettings = Field(default_factory=MfqSettings)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(2 ** 16, ge=1)
    target_sync: int = Field(500, ge=1)
    rounds: int = Field(1000, ge=1)
    train_steps_per_round: int = Field(1, ge=1)
    neighbor_radius: Union[Literal["all"], int] = "all"
    smoothing: float = Field(0.9, ge=0.0, lt=1.0)
    eval_every: int = Field(10, ge=1)
    squeeze: SqueezeSettings = Field(default_factory=SqueezeSettings)
    battle: BattleSettings = Field(default_factory=BattleSettings)

    @field_validator("neighbor_radius")
    @classmethod
    def _radius(cls, v):
        if v != "all" and v <= 0:
            raise ValueError("neighbour radius must be positive or 'all'")
        return v

    @model_validator(mode="after")
    def _battle_shapes(self):
        if self.environment == "battle":
            self.battle_config()
        return self

    def squeeze_config(self) -> SqueezeConfig:
        return self.squeeze.build()

    def battle_config(self) -> BattleConfig:
        return self.battle.build(self.neighbor_radius)

    @property
    def radius(self):
        """Neighbour radius for co-agent sets; None means the whole army."""
        return None if self.neighbor_radius == "all" else int(self.neighbor_radius)


def parse(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def load(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping")
    return parse(data)


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
