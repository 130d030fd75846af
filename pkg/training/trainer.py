"""
Training loop: data collection, world-model learning and actor-critic learning.

Three topologies share one Learner:
    sync      collect an episode, then `updates_per_episode` learner steps, in
              one thread; bit-reproducible for a fixed seed
    threads=2 a collector thread plus the learner in the main thread
    threads=3 collector, world-model and actor-critic threads; the world-model
              thread hands posterior start states to the actor-critic thread

A learner step is one world-model update followed by one actor-critic update
(in the 3-thread mode the two run concurrently and the world-model updates
are counted). Learner steps never run ahead of
updates_per_episode * (episodes - prefill + 1).
"""

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from agent.bundle import Agent, save_agent
from agent.world_model import LatentState, SequenceBatch
from autodiff.checkpoint import blob_hash
from autodiff.optim import AdamState, adam_update, global_norm
from autodiff.tensor import lift
from config import TrackerConfig, config_hash, dump_tracker_config
from errors import ConfigError
from plant.simulator import MuscleFingerPlant
from tracking.reward import mse
from tracking.trajectory import Trajectory, all_windows, held_out_set, training_set
from training.collector import CollectorThread, TrackerController, collect_episode, tracking_run
from training.replay import Episode, ReplayBuffer, buffer_sample
from training.snapshots import ParameterSnapshot, SnapshotStore

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
MANIFEST_FILE = "manifest.json"
AGENT_CHECKPOINT = "agent.ckpt"
CRASH_CHECKPOINT = "crash.ckpt"


class MetricsLog:
    """JSON-lines run log. Every record gets the next value of a strictly increasing `step`."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", encoding="utf-8")
        self._lock = threading.Lock()
        self._step = 0

    def write(self, kind: str, learner_step: int, values: dict) -> int:
        with self._lock:
            self._step += 1
            record = {"step": self._step, "kind": kind, "learner_step": learner_step, **values}
            self._file.write(json.dumps(record, sort_keys=True) + "\n")
            self._file.flush()
            return self._step

    def close(self) -> None:
        with self._lock:
            self._file.close()


class PlateauDetector:
    """
    Reports a plateau once `patience` consecutive evaluations fail to beat the
    best score so far by more than `tolerance` (relative). Higher is better.
    """

    def __init__(self, patience: int, tolerance: float):
        self.patience = patience
        self.tolerance = tolerance
        self.best: float | None = None
        self.stale = 0

    def update(self, score: float) -> bool:
        if self.best is None or score - self.best > self.tolerance * abs(self.best):
            self.best = score
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


class Learner:
    """Owns the trainable parameters and their Adam states."""

    def __init__(self, agent: Agent, trajectories: list[Trajectory], seed: int):
        cfg = agent.config
        self.config = cfg
        self.world_model = agent.world_model
        self.policy = agent.policy
        self.wm_params = agent.wm_params
        self.actor_params = agent.actor_params
        self.critic_params = agent.critic_params
        self.wm_opt = AdamState.zeros_like(self.wm_params)
        self.actor_opt = AdamState.zeros_like(self.actor_params)
        self.critic_opt = AdamState.zeros_like(self.critic_params)
        self.step = agent.learner_step
        self.ac_steps = 0
        self.wm_rng = np.random.default_rng([seed, 2])
        self.ac_rng = np.random.default_rng([seed, 3])

        horizon = cfg.policy.horizon
        short = [t.name for t in trajectories if len(t) < horizon + 1]
        if short:
            raise ConfigError(f"training trajectories shorter than horizon + 1 = {horizon + 1}: {short}")
        self._windows = [all_windows(t, self.world_model.window_steps) for t in trajectories]

    def agent(self, template: Agent) -> Agent:
        return template.with_params(wm_params=self.wm_params, actor_params=self.actor_params,
                                    critic_params=self.critic_params, learner_step=self.step)

    def world_model_step(self, batch: SequenceBatch) -> tuple[dict[str, float], LatentState]:
        """One world-model update; returns its metrics and a random subset of the posterior states as dream starts."""
        cfg = self.config
        result = self.world_model.wm_loss(self.wm_params, batch, self.wm_rng)
        self.wm_params, self.wm_opt = adam_update(self.wm_params, result.grads, self.wm_opt, cfg.model.lr,
                                                  nonfinite=cfg.train.nonfinite)
        self.step += 1

        b, l = batch.batch_size, batch.length
        hs = result.posterior_h.reshape(b * l, -1)
        zs = result.posterior_z.reshape(b * l, -1)
        chosen = self.wm_rng.choice(b * l, size=min(cfg.policy.dream_starts, b * l), replace=False)
        const = self.world_model.const
        starts = LatentState(const(hs[chosen]), const(zs[chosen]))
        return {**result.metrics, "grad_norm": global_norm(result.grads)}, starts

    def dream_windows(self, n: int) -> np.ndarray:
        """(n, horizon + 1, window_dim) target windows from random training trajectories."""
        horizon = self.config.policy.horizon
        streams = []
        for _ in range(n):
            windows = self._windows[int(self.ac_rng.integers(len(self._windows)))]
            offset = int(self.ac_rng.integers(0, len(windows) - horizon))
            streams.append(windows[offset:offset + horizon + 1])
        return np.stack(streams)

    def actor_critic_step(self, starts: LatentState) -> dict[str, float]:
        cfg = self.config
        actor_lifted = lift(self.actor_params)
        windows = self.dream_windows(starts.h.shape[0])
        imagined = self.world_model.dream(lift(self.wm_params), self.policy, actor_lifted, starts, windows, self.ac_rng)
        result = self.policy.actor_critic_update(imagined, actor_lifted, self.critic_params)
        self.actor_params, self.actor_opt = adam_update(self.actor_params, result.actor_grads, self.actor_opt,
                                                        cfg.policy.lr_actor, nonfinite=cfg.train.nonfinite)
        self.critic_params, self.critic_opt = adam_update(self.critic_params, result.critic_grads, self.critic_opt,
                                                          cfg.policy.lr_critic, nonfinite=cfg.train.nonfinite)
        self.ac_steps += 1
        return result.metrics


@dataclass
class RunResult:
    agent: Agent
    out_dir: Path
    stop_reason: str
    episodes: int
    learner_steps: int
    manifest: dict = field(repr=False)


class Trainer:
    def __init__(self, cfg: TrackerConfig, out_dir: str | Path, sync: bool = False, agent: Agent | None = None,
                 budget_fraction: float = 1.0, command: str = "train"):
        self.config = cfg
        self.out_dir = Path(out_dir)
        self.sync = sync
        self.command = command
        self.budget_fraction = budget_fraction
        train = cfg.train
        self.seed = train.seed
        self.agent = agent if agent is not None else Agent.build(cfg)

        self.trajectories = training_set(train.trajectory_set, train.trajectory_count, train.episode_steps,
                                         cfg.eval.range_deg, train.max_step_deg, seed=self.seed)
        self.held_out = held_out_set(cfg.eval.range_deg, train.max_step_deg, cfg.eval.length,
                                     count=train.eval_trajectories)
        self.buffer = ReplayBuffer(train.capacity)
        self.snapshots = SnapshotStore(self.agent.tensors())
        self.learner = Learner(self.agent, self.trajectories, self.seed)
        self.plateau = PlateauDetector(train.plateau_patience, train.plateau_tolerance)
        self.metrics: MetricsLog | None = None

        self.max_learner_steps = self.learner.step + max(1, int(train.max_learner_steps * budget_fraction))
        self.max_episodes = None if train.max_episodes is None else max(1, int(train.max_episodes * budget_fraction))
        self.wall_clock_s = train.wall_clock_s * budget_fraction
        self._plateaued = False
        self._evaluated_at = 0
        self._started = 0.0

    # -- pieces ------------------------------------------------------------------

    def collect(self, index: int, snapshot: ParameterSnapshot) -> Episode:
        """Episode `index` with its own rng, so the data depends only on the seed and the snapshot."""
        train, policy_cfg = self.config.train, self.config.policy
        rng = np.random.default_rng([self.seed, 1, index])
        trajectory = self.trajectories[int(rng.integers(len(self.trajectories)))]
        plant = MuscleFingerPlant(self.config.plant)
        controller = TrackerController(self.agent.world_model, self.agent.policy,
                                       snapshot.select("wm/"), snapshot.select("actor/"))
        noise = policy_cfg.exploration_std * plant.config.max_pressure_kpa if index < policy_cfg.exploration_episodes else 0.0
        episode = collect_episode(plant, controller, trajectory, rng, train.episode_steps, train.reward,
                                  mode="sample", exploration_std=noise)
        if self.metrics is not None:
            self.metrics.write("collect", self.learner.step,
                               {"episode": index, "trajectory": trajectory.name, "total_reward": episode.total_reward})
        return episode

    def evaluate_held_out(self, snapshot: ParameterSnapshot) -> dict[str, float]:
        wm_params, actor_params = snapshot.select("wm/"), snapshot.select("actor/")
        rewards, errors = [], []
        for i, trajectory in enumerate(self.held_out):
            plant = MuscleFingerPlant(self.config.plant)
            episode = tracking_run(self.agent.world_model, self.agent.policy, wm_params, actor_params, plant,
                                   trajectory, self.config.eval.seed + i, self.config.train.reward)
            rewards.append(episode.total_reward)
            errors.append(mse(episode.observations[1:, 0], trajectory.target_angles))
        result = {"eval_reward": float(np.mean(rewards)), "eval_mse": float(np.mean(errors))}
        self.metrics.write("eval", self.learner.step, {"episodes": self.buffer.episodes_added, **result})
        logger.info("Eval after %d episodes / %d learner steps: reward %.3f, MSE %.2f",
                    self.buffer.episodes_added, self.learner.step, result["eval_reward"], result["eval_mse"])
        if self.plateau.update(result["eval_reward"]):
            self._plateaued = True
        return result

    def _maybe_evaluate(self) -> None:
        episodes = self.buffer.episodes_added
        every = self.config.train.eval_every_episodes
        if episodes // every > self._evaluated_at // every:
            self._evaluated_at = episodes
            self.evaluate_held_out(self.snapshots.latest())

    def _learner_budget(self) -> int:
        """Learner steps allowed by the data collected so far."""
        train = self.config.train
        ready = self.buffer.episodes_added - train.prefill_episodes + 1
        return self.agent.learner_step + max(0, ready) * train.updates_per_episode

    def stop_reason(self) -> str | None:
        if self.learner.step >= self.max_learner_steps:
            return "max_learner_steps"
        if self.max_episodes is not None and self.buffer.episodes_added >= self.max_episodes:
            return "max_episodes"
        if self._plateaued:
            return "plateau"
        if time.monotonic() - self._started >= self.wall_clock_s:
            return "wall_clock"
        return None

    def _sample(self) -> SequenceBatch:
        train = self.config.train
        return buffer_sample(self.buffer, train.batch_size, train.sequence_length, self.learner.wm_rng)

    def _wm_update(self) -> LatentState:
        values, starts = self.learner.world_model_step(self._sample())
        self.metrics.write("wm", self.learner.step, values)
        return starts

    def _ac_update(self, starts: LatentState) -> None:
        values = self.learner.actor_critic_step(starts)
        self.metrics.write("ac", self.learner.step, values)

    def learner_step(self) -> None:
        self._ac_update(self._wm_update())
        learner = self.learner
        self.snapshots.publish(wm=learner.wm_params, actor=learner.actor_params, critic=learner.critic_params)

    # -- topologies --------------------------------------------------------------

    def _run_sync(self) -> str:
        while True:
            reason = self.stop_reason()
            if reason:
                return reason
            index = self.buffer.episodes_added
            self.buffer.add(self.collect(index, self.snapshots.latest()))
            while self.learner.step < min(self._learner_budget(), self.max_learner_steps):
                self.learner_step()
            self._maybe_evaluate()

    def _run_two_threads(self) -> str:
        stop = threading.Event()
        collector = CollectorThread(self.collect, self.snapshots, self.buffer, stop)
        collector.start()
        try:
            while True:
                reason = self.stop_reason()
                if reason or stop.is_set():
                    return reason or "collector_error"
                if self.learner.step < self._learner_budget():
                    self.learner_step()
                else:
                    stop.wait(0.01)
                self._maybe_evaluate()
        finally:
            stop.set()
            collector.join()
            if collector.error is not None:
                raise collector.error

    def _run_three_threads(self) -> str:
        stop = threading.Event()
        starts_queue: queue.Queue[LatentState] = queue.Queue(maxsize=4)
        errors: list[BaseException] = []

        def guarded(body):
            def run():
                try:
                    while not stop.is_set():
                        body()
                except BaseException as exc:
                    logger.exception("%s failed", threading.current_thread().name)
                    errors.append(exc)
                    stop.set()
            return run

        def wm_body():
            if self.learner.step >= self._learner_budget():
                stop.wait(0.01)
                return
            starts = self._wm_update()
            self.snapshots.publish(wm=self.learner.wm_params)
            while not stop.is_set():
                try:
                    starts_queue.put(starts, timeout=0.05)
                    return
                except queue.Full:
                    continue

        def ac_body():
            try:
                starts = starts_queue.get(timeout=0.05)
            except queue.Empty:
                return
            self._ac_update(starts)
            self.snapshots.publish(actor=self.learner.actor_params, critic=self.learner.critic_params)

        collector = CollectorThread(self.collect, self.snapshots, self.buffer, stop)
        workers = [threading.Thread(target=guarded(wm_body), name="world-model", daemon=True),
                   threading.Thread(target=guarded(ac_body), name="actor-critic", daemon=True)]
        collector.start()
        for worker in workers:
            worker.start()
        try:
            while True:
                reason = self.stop_reason()
                if reason or stop.is_set():
                    return reason or "worker_error"
                self._maybe_evaluate()
                stop.wait(0.05)
        finally:
            stop.set()
            collector.join()
            for worker in workers:
                worker.join()
            if collector.error is not None:
                errors.insert(0, collector.error)
            if errors:
                raise errors[0]

    # -- entry point -------------------------------------------------------------

    def run(self) -> RunResult:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump_tracker_config(self.config, self.out_dir / "config.yaml")
        self.metrics = MetricsLog(self.out_dir / METRICS_FILE)
        self._started = time.monotonic()
        topology = "sync" if self.sync else f"{self.config.train.threads} threads"
        logger.info("Training (%s) into %s, seed %d, %d training trajectories",
                    topology, self.out_dir, self.seed, len(self.trajectories))
        try:
            if self.sync:
                reason = self._run_sync()
            elif self.config.train.threads == 2:
                reason = self._run_two_threads()
            else:
                reason = self._run_three_threads()
        except BaseException:
            crash = self.out_dir / CRASH_CHECKPOINT
            save_agent(crash, self.learner.agent(self.agent), {"crashed": True})
            logger.error("Training aborted; learner state saved to %s", crash)
            raise
        finally:
            self.metrics.close()

        agent = self.learner.agent(self.agent)
        checkpoint = save_agent(self.out_dir / AGENT_CHECKPOINT, agent, {"stop_reason": reason})
        manifest = write_manifest(self.out_dir, self.command, self.config, sync=self.sync,
                                  extra={"episodes": self.buffer.episodes_added,
                                         "learner_steps": self.learner.step,
                                         "actor_critic_steps": self.learner.ac_steps,
                                         "stop_reason": reason},
                                  files=[checkpoint, self.out_dir / METRICS_FILE])
        logger.info("Training stopped (%s) after %d episodes and %d learner steps",
                    reason, self.buffer.episodes_added, self.learner.step)
        return RunResult(agent, self.out_dir, reason, self.buffer.episodes_added, self.learner.step, manifest)


def write_manifest(out_dir: str | Path, command: str, cfg: TrackerConfig, sync: bool = False,
                   extra: dict | None = None, files: list[Path] | None = None) -> dict:
    """Everything needed to rerun a command: config hash, seeds, topology and content hashes of its outputs."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg.train.seed,
        "eval_seed": cfg.eval.seed,
        "sync": sync,
        "threads": None if sync else cfg.train.threads,
        **(extra or {}),
        "files": {_manifest_key(Path(f), out_dir): blob_hash(f) for f in files or [] if Path(f).exists()},
    }
    (out_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _manifest_key(path: Path, out_dir: Path) -> str:
    try:
        return path.relative_to(out_dir).as_posix()
    except ValueError:
        return path.name
