"""
Experiments run from a trained agent: suite evaluation, the PID comparison,
fine-tuning after a plant perturbation and the open-loop world-model rollout.

Every controller run on trajectory i of a suite resets the plant with
`seed + i`, so two controllers compared on one suite see the same targets
and the same plant noise.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from agent.bundle import Agent
from autodiff.tensor import lift
from config import TrackerConfig
from control.pid import PidGains, gains_from_section, refine_gains, run_pid, ziegler_nichols_tune
from errors import ConfigError
from plant.params import PlantConfig
from plant.simulator import MuscleFingerPlant, plant_perturb
from plant.traces import trace_frame, write_trace_csv
from tracking.reward import mse
from tracking.trajectory import Trajectory, all_windows, eval_suite, held_out_set, load_csv, save_csv, training_set
from training import reports
from training.collector import tracking_run
from training.trainer import Trainer, write_manifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteRun:
    """One controller on one trajectory: observations after each step (T, 4) and the actions (T, 2)."""

    trajectory: Trajectory
    observations: np.ndarray
    actions: np.ndarray

    @property
    def mse(self) -> float:
        return mse(self.observations[:, 0], self.trajectory.target_angles)


def _check_suite(suite: list[Trajectory]) -> None:
    if not suite:
        raise ConfigError("evaluation suite is empty")


def load_suite(cfg: TrackerConfig, directory: str | Path | None = None) -> list[Trajectory]:
    """The built-in ten-trajectory suite, or every trajectory CSV in `directory` (sorted by name)."""
    if directory is None:
        return eval_suite(cfg.eval.range_deg, cfg.eval.length)
    suite = [load_csv(path) for path in sorted(Path(directory).glob("*.csv"))]
    _check_suite(suite)
    return suite


def tracker_runs(agent: Agent, plant_config: PlantConfig, suite: list[Trajectory], seed: int) -> list[SuiteRun]:
    _check_suite(suite)
    runs = []
    for i, trajectory in enumerate(suite):
        plant = MuscleFingerPlant(plant_config)
        episode = tracking_run(agent.world_model, agent.policy, agent.wm_params, agent.actor_params, plant,
                               trajectory, seed + i, agent.config.train.reward)
        runs.append(SuiteRun(trajectory, np.asarray(episode.observations[1:]), np.asarray(episode.actions[1:])))
    return runs


def pid_runs(plant_config: PlantConfig, gains: PidGains, suite: list[Trajectory], seed: int,
             cfg: TrackerConfig) -> list[SuiteRun]:
    _check_suite(suite)
    return [SuiteRun(t, *run_pid(plant_config, gains, t.target_angles, seed + i, cfg.pid)) for i, t in enumerate(suite)]


def evaluate(agent: Agent, plant_config: PlantConfig, suite: list[Trajectory], seed: int) -> pd.DataFrame:
    """Per-trajectory tracking MSE (deg²) of the agent's mean actions, one row per suite trajectory."""
    runs = tracker_runs(agent, plant_config, suite, seed)
    table = reports.mse_table([r.trajectory.name for r in runs], {"tracker": [r.mse for r in runs]})
    logger.info("Tracker MSE over %d trajectories: %s", len(runs), reports.fmt_mean_std(table["tracker"]))
    return table


def write_runs(out_dir: str | Path, label: str, runs: list[SuiteRun]) -> None:
    for run in runs:
        frame = trace_frame(run.observations, run.actions, run.trajectory.target_angles)
        write_trace_csv(Path(out_dir) / "traces" / f"{label}_{run.trajectory.name}.csv", frame)


def tune_pid(cfg: TrackerConfig, seed: int | None = None) -> tuple[PidGains, pd.DataFrame]:
    """Ziegler-Nichols on the noise-free plant, then a grid refinement on a held-out random walk."""
    seed = cfg.eval.seed if seed is None else seed
    zn = ziegler_nichols_tune(cfg.plant, cfg.pid, seed=seed)
    trajectory = held_out_set(cfg.eval.range_deg, cfg.train.max_step_deg, cfg.eval.length, count=1)[0]
    return refine_gains(cfg.plant, zn.gains, trajectory, cfg.pid, seed=seed)


def compare_pid(cfg: TrackerConfig, agent: Agent, out_dir: str | Path,
                suite: list[Trajectory] | None = None) -> pd.DataFrame:
    """
    Tracker and PID on the same suite with the same plant seeds. Writes the
    comparison table, per-step traces and one tracking figure per trajectory.
    """
    out_dir = Path(out_dir)
    suite = load_suite(cfg) if suite is None else suite
    seed = cfg.eval.seed
    gains = gains_from_section(cfg.pid)
    if gains is None:
        logger.info("No PID gains configured, tuning")
        gains, grid = tune_pid(cfg, seed)
        reports.write_table(out_dir / "pid_refinement.csv", grid)

    tracker = tracker_runs(agent, cfg.plant, suite, seed)
    pid = pid_runs(cfg.plant, gains, suite, seed, cfg)
    table = reports.mse_table([t.name for t in suite],
                              {"tracker": [r.mse for r in tracker], "pid": [r.mse for r in pid]})

    reports.write_table(out_dir / "comparison.csv", reports.with_summary(table))
    write_runs(out_dir, "tracker", tracker)
    write_runs(out_dir, "pid", pid)
    for t, ours, theirs in zip(suite, tracker, pid):
        fig = reports.tracking_figure(t.name, t.target_angles,
                                      {"Tracker": ours.observations[:, 0], "PID": theirs.observations[:, 0]})
        reports.write_figure(out_dir / "figures" / f"tracking_{t.name}.html", fig)
    write_manifest(out_dir, "compare-pid", cfg, extra={"pid_gains": gains.as_dict()},
                   files=[out_dir / "comparison.csv"])
    logger.info("Tracker %s vs PID %s", reports.fmt_mean_std(table["tracker"]), reports.fmt_mean_std(table["pid"]))
    return table


def finetune(cfg: TrackerConfig, agent: Agent, perturb: float, out_dir: str | Path, sync: bool = False,
             suite: list[Trajectory] | None = None) -> pd.DataFrame:
    """
    Perturb the plant, evaluate, retrain from `agent` with the fine-tune share
    of the training budget and fresh optimizers, evaluate again. Returns the
    three-row before / after-perturb / after-finetune table.
    """
    out_dir = Path(out_dir)
    suite = load_suite(cfg) if suite is None else suite
    seed = cfg.eval.seed
    perturbed = plant_perturb(cfg.plant, perturb, seed=seed)

    stages = [("before", evaluate(agent, cfg.plant, suite, seed)),
              ("after_perturb", evaluate(agent, perturbed, suite, seed))]
    retrain_cfg = cfg.model_copy(update={"plant": perturbed})
    trainer = Trainer(retrain_cfg, out_dir / "finetune", sync=sync, agent=agent.with_params(config=retrain_cfg),
                      budget_fraction=cfg.train.finetune_fraction, command="finetune")
    result = trainer.run()
    stages.append(("after_finetune", evaluate(result.agent, perturbed, suite, seed)))

    table = pd.DataFrame([{
        "stage": stage,
        "mse_mean": float(frame["tracker"].mean()),
        "mse_std": float(frame["tracker"].std(ddof=0)),
        "summary": reports.fmt_mean_std(frame["tracker"]),
    } for stage, frame in stages])
    reports.write_table(out_dir / "finetune.csv", table)
    write_manifest(out_dir, "finetune", cfg, sync=sync, extra={"perturb": perturb}, files=[out_dir / "finetune.csv"])
    return table


def direction_agreement(predicted, actual, start: float) -> float:
    """Fraction of steps where predicted and actual angles move in the same direction (both from `start`)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise ConfigError("direction agreement needs two equal, non-empty angle sequences")
    dp = np.sign(np.diff(np.concatenate([[start], predicted])))
    da = np.sign(np.diff(np.concatenate([[start], actual])))
    return float(np.mean(dp == da))


def rollout_worldmodel(agent: Agent, plant_config: PlantConfig, trajectory: Trajectory, steps: int,
                       seed: int) -> tuple[pd.DataFrame, float]:
    """
    Run the agent on the plant over the first `steps` targets and, from the
    same first observation, roll the world model open-loop under the same
    actor. Returns (step, predicted_deg, actual_deg) rows and the step-direction
    agreement rate.
    """
    if not 1 <= steps <= len(trajectory):
        raise ConfigError(f"rollout length {steps} outside [1, {len(trajectory)}]")
    trajectory = trajectory.slice(0, steps)
    wm = agent.world_model
    episode = tracking_run(wm, agent.policy, agent.wm_params, agent.actor_params, MuscleFingerPlant(plant_config),
                           trajectory, seed, agent.config.train.reward)
    first_obs = episode.observations[0]
    predicted = wm.open_loop_rollout(lift(agent.wm_params), agent.policy, lift(agent.actor_params), first_obs,
                                     all_windows(trajectory, wm.window_steps))
    actual = episode.observations[1:, 0]
    frame = pd.DataFrame({"step": np.arange(1, steps + 1), "predicted_deg": predicted, "actual_deg": actual})
    agreement = direction_agreement(predicted, actual, float(first_obs[0]))
    logger.info("World-model rollout over %d steps: direction agreement %.1f%%", steps, 100 * agreement)
    return frame, agreement


def gen_trajectories(cfg: TrackerConfig, out_dir: str | Path) -> list[Path]:
    """Write the evaluation suite, the training set and the held-out set as trajectory CSVs."""
    out_dir = Path(out_dir)
    train = cfg.train
    sets = {
        "eval": eval_suite(cfg.eval.range_deg, cfg.eval.length),
        "train": training_set(train.trajectory_set, train.trajectory_count, train.episode_steps,
                              cfg.eval.range_deg, train.max_step_deg, seed=train.seed),
        "heldout": held_out_set(cfg.eval.range_deg, train.max_step_deg, cfg.eval.length,
                                count=train.eval_trajectories),
    }
    paths = [save_csv(t, out_dir / group / f"{t.name}.csv") for group, trajectories in sets.items() for t in trajectories]
    logger.info("Wrote %d trajectories to %s", len(paths), out_dir)
    return paths
