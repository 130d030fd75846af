import sys, os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from config import ModelSection, PolicySection, TrackerConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training checks (deselect with -m \"not slow\")")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_model_cfg():
    return ModelSection(deter_size=8, groups=2, classes=3, units=16, layers=1, window_steps=3, precision=64)


@pytest.fixture
def tiny_policy_cfg():
    return PolicySection(horizon=4, dream_starts=8)


@pytest.fixture
def tiny_config(tiny_model_cfg, tiny_policy_cfg):
    """A run small enough to train for a few steps inside a unit test."""
    return TrackerConfig.model_validate({
        "model": tiny_model_cfg.model_dump(),
        "policy": tiny_policy_cfg.model_dump(by_alias=True),
        "train": {
            "episode_steps": 20,
            "sequence_length": 8,
            "batch_size": 2,
            "capacity": 10,
            "prefill_episodes": 1,
            "updates_per_episode": 2,
            "max_learner_steps": 4,
            "eval_every_episodes": 2,
            "eval_trajectories": 1,
            "trajectory_count": 3,
        },
        "eval": {"length": 20},
    })
