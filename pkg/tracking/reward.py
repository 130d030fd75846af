"""
Tracking reward and the evaluation MSE.

    r = -sum_i [ (|theta_i - target_i| / alpha)^2 + I_i / beta ] - sum_j (p_j / gamma)^2

I_i is 1 when the joint moves against the target velocity. Pressures are in
kPa, so with gamma = 50000 the pressure term stays below 1e-4 at 500 kPa.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat

from errors import ShapeError


class RewardParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: PositiveFloat = 40.0
    beta: PositiveFloat = 1000.0
    gamma: PositiveFloat = 50000.0


def velocity_sign_indicator(velocity, target_velocity) -> np.ndarray:
    """1 where velocity * target_velocity < 0, else 0 (a zero velocity never counts)."""
    return (np.asarray(velocity, dtype=np.float64) * np.asarray(target_velocity, dtype=np.float64) < 0).astype(np.float64)


def reward(angles, target_angles, velocities, target_velocities, pressures,
           params: RewardParams = RewardParams()) -> float:
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    target_angles = np.atleast_1d(np.asarray(target_angles, dtype=np.float64))
    velocities = np.atleast_1d(np.asarray(velocities, dtype=np.float64))
    target_velocities = np.atleast_1d(np.asarray(target_velocities, dtype=np.float64))
    pressures = np.atleast_1d(np.asarray(pressures, dtype=np.float64))
    n = len(angles)
    if len(target_angles) != n or len(velocities) != n or len(target_velocities) != n:
        raise ShapeError(f"reward: joint arrays have lengths {n}, {len(target_angles)}, "
                         f"{len(velocities)}, {len(target_velocities)}")

    tracking = np.square(np.abs(angles - target_angles) / params.alpha)
    direction = velocity_sign_indicator(velocities, target_velocities) / params.beta
    effort = np.square(pressures / params.gamma)
    return float(-(tracking.sum() + direction.sum()) - effort.sum())


def reward_from_observation(observation: np.ndarray, target_window: np.ndarray, n_joints: int,
                            window_steps: int, params: RewardParams = RewardParams()) -> float:
    """Reward of a flat observation [angles, velocities, pressures] against the first step of a window."""
    observation = np.asarray(observation, dtype=np.float64)
    target_window = np.asarray(target_window, dtype=np.float64)
    target_angles = target_window[:n_joints]
    target_velocities = target_window[window_steps * n_joints:window_steps * n_joints + n_joints]
    return reward(observation[:n_joints], target_angles,
                  observation[n_joints:2 * n_joints], target_velocities,
                  observation[2 * n_joints:], params)


def mse(actual, target) -> float:
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if actual.size == 0:
        raise ShapeError("mse of an empty sequence")
    if actual.shape != target.shape:
        raise ShapeError(f"mse: lengths {actual.size} and {target.size} differ")
    return float(np.mean(np.square(actual - target)))
