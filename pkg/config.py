import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Literal

import yaml
from dotenv import load_dotenv
from pydantic import (
    BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError,
    model_validator,
)

from errors import ConfigError
from plant.params import PlantConfig
from tracking.reward import RewardParams

load_dotenv()


class Config:
    RUNS_DIR: str = os.getenv("TRACKER_RUNS_DIR", "runs")
    LOG_LEVEL: str = os.getenv("TRACKER_LOG_LEVEL", "INFO")
    CONFIG_PATH: str = os.getenv("TRACKER_CONFIG", "")
    SEED: int = int(os.getenv("TRACKER_SEED", "0"))

    # Every tensor op validates its output when set
    CHECK_FINITE: bool = os.getenv("TRACKER_CHECK_FINITE", "true").lower() == "true"

    @property
    def runs_path(self) -> Path:
        return Path(self.RUNS_DIR)


config = Config()


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=(level or config.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


# -- experiment configuration (YAML) -----------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    deter_size: PositiveInt = 128
    groups: PositiveInt = 8
    classes: PositiveInt = 8
    units: PositiveInt = 128
    layers: PositiveInt = 2
    kl_scale: NonNegativeFloat = 1.0
    kl_balance: float = Field(0.8, ge=0.0, le=1.0)
    free_nats: NonNegativeFloat = 1.0
    discount: float = Field(0.99, gt=0.0, le=1.0)
    lr: PositiveFloat = 4e-4
    window_steps: PositiveInt = 3
    precision: Literal[32, 64] = 32


class PolicySection(_Section):
    lr_actor: PositiveFloat = 4e-4
    lr_critic: PositiveFloat = 2e-4
    horizon: PositiveInt = 15
    lambda_: float = Field(0.95, ge=0.0, le=1.0, alias="lambda")
    entropy_coeff: NonNegativeFloat = 1e-3
    actor_uses_h: bool = False
    exploration_std: NonNegativeFloat = 0.05
    exploration_episodes: int = Field(20, ge=0)
    dream_starts: PositiveInt = 64

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class PidSection(_Section):
    kp: PositiveFloat | None = None
    ki: NonNegativeFloat | None = None
    kd: NonNegativeFloat | None = None
    bias_fraction: float = Field(0.2, ge=0.0, le=0.5)
    integral_limit: PositiveFloat = 200.0
    setpoint_deg: float = 10.0
    kp_start: PositiveFloat = 0.05
    kp_max: PositiveFloat = 500.0
    bisect_steps: NonNegativeInt = 6
    stop_margin_deg: NonNegativeFloat = 0.5
    refine_fraction: float = Field(0.3, ge=0.0, lt=1.0)

    @property
    def gains_set(self) -> bool:
        return self.kp is not None


class TrainSection(_Section):
    seed: int = Field(default_factory=lambda: config.SEED)
    episode_steps: int = Field(200, ge=2)
    capacity: PositiveInt = 500
    batch_size: PositiveInt = 16
    sequence_length: int = Field(50, ge=2)
    updates_per_episode: PositiveInt = 8
    prefill_episodes: PositiveInt = 5
    max_learner_steps: PositiveInt = 100_000
    max_episodes: PositiveInt | None = None
    wall_clock_s: PositiveFloat = 1800.0
    eval_every_episodes: PositiveInt = 25
    eval_trajectories: PositiveInt = 3
    plateau_patience: PositiveInt = 5
    plateau_tolerance: NonNegativeFloat = 0.02
    threads: Literal[2, 3] = 2
    trajectory_set: Literal["experiment1", "experiment2"] = "experiment1"
    trajectory_count: PositiveInt = 50
    max_step_deg: PositiveFloat = 3.0
    finetune_fraction: float = Field(0.25, gt=0.0, le=1.0)
    nonfinite: Literal["raise", "skip"] = "raise"
    reward: RewardParams = Field(default_factory=RewardParams)

    @model_validator(mode="after")
    def _check(self) -> "TrainSection":
        if self.sequence_length > self.episode_steps:
            raise ValueError("sequence_length cannot exceed episode_steps")
        return self


class EvalSection(_Section):
    range_deg: tuple[float, float] = (-25.0, 40.0)
    length: int = Field(200, ge=2)
    seed: int = 1234

    @model_validator(mode="after")
    def _check(self) -> "EvalSection":
        if not self.range_deg[0] < self.range_deg[1]:
            raise ValueError("range_deg must be increasing")
        return self


class TrackerConfig(_Section):
    plant: PlantConfig = Field(default_factory=PlantConfig)
    model: ModelSection = Field(default_factory=ModelSection)
    policy: PolicySection = Field(default_factory=PolicySection)
    pid: PidSection = Field(default_factory=PidSection)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    def with_seed(self, seed: int) -> "TrackerConfig":
        return self.model_copy(update={"train": self.train.model_copy(update={"seed": seed})})

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def load_tracker_config(path: str | Path | None = None) -> TrackerConfig:
    """
    Load a YAML run configuration. Missing sections and keys take defaults;
    unknown keys are rejected. With no path, falls back to TRACKER_CONFIG and
    then to the built-in defaults.
    """
    path = path or config.CONFIG_PATH
    if not path:
        return TrackerConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_tracker_config(raw, source=str(path))


def parse_tracker_config(raw: dict, source: str = "<dict>") -> TrackerConfig:
    try:
        return TrackerConfig.model_validate(raw)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"{source}: {problems}") from exc


def dump_tracker_config(cfg: TrackerConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return path


def config_hash(cfg: TrackerConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
