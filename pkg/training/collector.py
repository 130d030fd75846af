"""
Closed-loop data collection with the learned controller.

Each control step: the posterior folds in the live observation, the actor
picks pressures from the latent and the target window, the plant advances
100 ms and the reward is scored against the first target of that window.
"""

import logging
import threading
from collections.abc import Callable

import numpy as np

from agent.policy import Policy, target_for_reward_alignment
from agent.world_model import LatentState, WorldModel
from autodiff.tensor import lift
from errors import ConfigError
from plant.simulator import MuscleFingerPlant
from tracking.reward import RewardParams, reward_from_observation
from tracking.trajectory import Trajectory, window
from training.replay import Episode, ReplayBuffer
from training.snapshots import ParameterSnapshot, SnapshotStore

logger = logging.getLogger(__name__)


class TrackerController:
    """Stateful wrapper that runs the posterior and the actor one control step at a time."""

    def __init__(self, world_model: WorldModel, policy: Policy, wm_params, actor_params):
        self.world_model = world_model
        self.policy = policy
        self.wm_params = lift(wm_params)
        self.actor_params = lift(actor_params)
        self.state: LatentState | None = None

    def reset(self, first_obs: np.ndarray, rng: np.random.Generator | None) -> None:
        wm = self.world_model
        self.state = wm.posterior_step(self.wm_params, wm.initial_state(1), np.zeros((1, wm.action_dim)),
                                       np.asarray(first_obs, dtype=np.float64)[None], rng)

    def act(self, target_window: np.ndarray, mode: str, rng: np.random.Generator | None) -> np.ndarray:
        action, _ = self.policy.act(self.actor_params, self.state, np.asarray(target_window)[None], mode, rng)
        return action.numpy()[0].astype(np.float64)

    def observe(self, obs: np.ndarray, executed_action: np.ndarray, rng: np.random.Generator | None) -> None:
        self.state = self.world_model.posterior_step(self.wm_params, self.state, executed_action[None],
                                                     np.asarray(obs, dtype=np.float64)[None], rng)


def collect_episode(plant: MuscleFingerPlant, controller: TrackerController, trajectory: Trajectory,
                    rng: np.random.Generator, steps: int, reward_params: RewardParams = RewardParams(),
                    mode: str = "sample", exploration_std: float = 0.0, plant_seed: int | None = None) -> Episode:
    """
    Run `steps - 1` control steps after a reset. `exploration_std` is Gaussian
    action noise in kPa added on top of the actor's output. The plant is reset
    with `plant_seed`, or with a seed drawn from `rng` when none is given.
    """
    l = controller.world_model.window_steps
    n_joints = controller.world_model.n_joints
    if len(trajectory) < steps - 1:
        raise ConfigError(f"trajectory '{trajectory.name}' has {len(trajectory)} steps, episode needs {steps - 1}")
    p_max = plant.config.max_pressure_kpa
    obs = plant.reset(int(rng.integers(2**31)) if plant_seed is None else plant_seed).vector
    sample_rng = rng if mode == "sample" else None
    controller.reset(obs, sample_rng)

    first = window(trajectory, 0, l)
    observations, actions, targets = [obs], [np.zeros(controller.world_model.action_dim)], [first]
    rewards = [reward_from_observation(obs, first, n_joints, l, reward_params)]
    for t in range(steps - 1):
        target = target_for_reward_alignment(trajectory, t, l)
        action = controller.act(target, mode, sample_rng)
        if exploration_std > 0:
            action = np.clip(action + rng.normal(0.0, exploration_std, size=action.shape), 0.0, p_max)
        obs = plant.step(action).vector
        controller.observe(obs, action, sample_rng)
        observations.append(obs)
        actions.append(action)
        targets.append(target)
        rewards.append(reward_from_observation(obs, target, n_joints, l, reward_params))

    # the step limit truncates the episode; no step is terminal
    ends = np.zeros(steps)
    return Episode(np.array(observations), np.array(actions), np.array(rewards), np.array(targets), ends,
                   trajectory=trajectory.name)


def tracking_run(world_model: WorldModel, policy: Policy, wm_params, actor_params, plant: MuscleFingerPlant,
                 trajectory: Trajectory, seed: int, reward_params: RewardParams = RewardParams()) -> Episode:
    """
    Evaluation run: mean actions over the whole trajectory (len(trajectory)
    control steps), plant reset with `seed` exactly as `run_pid` does.
    """
    controller = TrackerController(world_model, policy, wm_params, actor_params)
    rng = np.random.default_rng(seed)
    return collect_episode(plant, controller, trajectory, rng, len(trajectory) + 1, reward_params, mode="mean",
                           plant_seed=seed)


class CollectorThread(threading.Thread):
    """Collects episodes with the newest snapshot until stopped; the first error is kept in `error`."""

    def __init__(self, collect: Callable[[int, ParameterSnapshot], Episode], snapshots: SnapshotStore, buffer: ReplayBuffer,
                 stop_event: threading.Event):
        super().__init__(name="collector", daemon=True)
        self.collect = collect
        self.snapshots = snapshots
        self.buffer = buffer
        self.stop_event = stop_event
        self.error: BaseException | None = None

    def run(self) -> None:
        index = self.buffer.episodes_added
        try:
            while not self.stop_event.is_set():
                snapshot = self.snapshots.latest()
                episode = self.collect(index, snapshot)
                self.buffer.add(episode)
                index += 1
        except BaseException as exc:
            logger.exception("Collector failed")
            self.error = exc
            self.stop_event.set()
