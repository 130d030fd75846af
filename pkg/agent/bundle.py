"""
An agent is a world model, an actor and a critic built from one run
configuration. Checkpoints store all three parameter sets in one file
(names prefixed "wm/", "actor/", "critic/") with the configuration in the
manifest's meta block.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from agent.policy import Policy
from agent.world_model import WorldModel
from autodiff.checkpoint import load_tensors, save_tensors
from config import TrackerConfig, parse_tracker_config
from errors import CheckpointError

logger = logging.getLogger(__name__)

PREFIXES = ("wm/", "actor/", "critic/")


@dataclass(frozen=True)
class Agent:
    config: TrackerConfig
    world_model: WorldModel = field(repr=False)
    policy: Policy = field(repr=False)
    wm_params: dict[str, np.ndarray] = field(repr=False)
    actor_params: dict[str, np.ndarray] = field(repr=False)
    critic_params: dict[str, np.ndarray] = field(repr=False)
    learner_step: int = 0

    @classmethod
    def build(cls, cfg: TrackerConfig, seed: int | None = None) -> "Agent":
        seed = cfg.train.seed if seed is None else seed
        p_max = cfg.plant.max_pressure_kpa
        world_model = WorldModel(cfg.model, p_max)
        policy = Policy(cfg.model, cfg.policy, p_max, action_dim=world_model.action_dim)
        actor, critic = policy.init(seed + 1)
        return cls(cfg, world_model, policy, world_model.init(seed), actor, critic)

    def with_params(self, **updates) -> "Agent":
        return replace(self, **updates)

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.wm_params, **self.actor_params, **self.critic_params}


def save_agent(path: str | Path, agent: Agent, meta: dict | None = None) -> Path:
    meta = {"config": agent.config.to_dict(), "learner_step": agent.learner_step, **(meta or {})}
    return save_tensors(path, agent.tensors(), meta)


def load_agent(path: str | Path, cfg: TrackerConfig | None = None) -> Agent:
    """
    Rebuild an agent from a checkpoint. Network shapes always come from the
    stored configuration; `cfg`, when given, replaces the rest of it (plant,
    training budget, evaluation settings).
    """
    tensors, meta = load_tensors(path)
    if "config" not in meta:
        raise CheckpointError(f"{path} carries no run configuration")
    stored = parse_tracker_config(meta["config"], source=str(path))
    if cfg is not None:
        stored = cfg.model_copy(update={"model": stored.model, "policy": stored.policy})
    agent = Agent.build(stored)

    groups = {prefix: {} for prefix in PREFIXES}
    for name, value in tensors.items():
        prefix = next((p for p in PREFIXES if name.startswith(p)), None)
        if prefix is None:
            raise CheckpointError(f"{path}: unexpected tensor '{name}'")
        groups[prefix][name] = value.astype(agent.world_model.dtype)

    expected = {"wm/": agent.wm_params, "actor/": agent.actor_params, "critic/": agent.critic_params}
    for prefix, reference in expected.items():
        loaded = groups[prefix]
        if set(loaded) != set(reference):
            raise CheckpointError(f"{path}: parameter names under '{prefix}' do not match the configuration")
        for name, value in loaded.items():
            if value.shape != reference[name].shape:
                raise CheckpointError(f"{path}: {name} has shape {value.shape}, expected {reference[name].shape}")
    logger.info("Loaded agent from %s (learner step %s)", path, meta.get("learner_step", 0))
    return replace(agent, wm_params=groups["wm/"], actor_params=groups["actor/"],
                   critic_params=groups["critic/"], learner_step=int(meta.get("learner_step", 0)))
