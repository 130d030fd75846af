"""
Tracker command line.

Usage:
    python scripts/tracker.py train [--config run.yaml] [--seed N] [--sync] [--out DIR]
    python scripts/tracker.py evaluate --checkpoint DIR/agent.ckpt [--suite DIR]
    python scripts/tracker.py compare-pid --checkpoint DIR/agent.ckpt
    python scripts/tracker.py finetune --checkpoint DIR/agent.ckpt --perturb 0.1
    python scripts/tracker.py rollout-worldmodel --checkpoint DIR/agent.ckpt [--steps 200]
    python scripts/tracker.py gen-trajectories
    python scripts/tracker.py tune-pid

Outputs go to --out (default $TRACKER_RUNS_DIR/<command>). On failure the
last stderr line is {"error": ..., "message": ...}; exit code 2 for Tracker
errors, 1 for anything else.
"""

import sys, os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import json
import logging
from pathlib import Path

from agent.bundle import load_agent
from config import config, configure_logging, dump_tracker_config, load_tracker_config
from control.pid import section_with_gains
from errors import ConfigError, TrackerError
from tracking.trajectory import gen_random_walk, load_csv
from training import experiments, reports
from training.trainer import METRICS_FILE, Trainer, write_manifest

logger = logging.getLogger("tracker")

TUNED_CONFIG_FILE = "config.yaml"


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else config.runs_path / args.command


def _load_config(args):
    cfg = load_tracker_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _require_checkpoint(args, cfg):
    if not args.checkpoint:
        raise ConfigError(f"{args.command} needs --checkpoint")
    return load_agent(args.checkpoint, cfg)


def _print_table(table) -> None:
    print(table.to_string(index=False))


def cmd_train(args) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    result = Trainer(cfg, out, sync=args.sync).run()
    reports.write_figure(out / "figures" / "training.html", reports.training_curve(reports.read_metrics(out / METRICS_FILE)))
    print(json.dumps({"out": str(out), "stop_reason": result.stop_reason, "episodes": result.episodes,
                      "learner_steps": result.learner_steps}))


def cmd_evaluate(args) -> None:
    cfg = _load_config(args)
    agent = _require_checkpoint(args, cfg)
    out = _out_dir(args)
    table = experiments.evaluate(agent, cfg.plant, experiments.load_suite(cfg, args.suite), cfg.eval.seed)
    path = reports.write_table(out / "evaluation.csv", reports.with_summary(table))
    write_manifest(out, "evaluate", cfg, extra={"checkpoint": str(args.checkpoint)}, files=[path])
    _print_table(reports.with_summary(table))


def cmd_compare_pid(args) -> None:
    cfg = _load_config(args)
    agent = _require_checkpoint(args, cfg)
    table = experiments.compare_pid(cfg, agent, _out_dir(args), experiments.load_suite(cfg, args.suite))
    _print_table(reports.with_summary(table))


def cmd_finetune(args) -> None:
    cfg = _load_config(args)
    agent = _require_checkpoint(args, cfg)
    table = experiments.finetune(cfg, agent, args.perturb, _out_dir(args), sync=args.sync,
                                 suite=experiments.load_suite(cfg, args.suite))
    _print_table(table)


def cmd_rollout_worldmodel(args) -> None:
    cfg = _load_config(args)
    agent = _require_checkpoint(args, cfg)
    out = _out_dir(args)
    if args.trajectory:
        trajectory = load_csv(args.trajectory)
    else:
        trajectory = gen_random_walk(cfg.eval.range_deg, cfg.train.max_step_deg, max(args.steps, cfg.eval.length),
                                     seed=cfg.eval.seed, name="rollout_walk")
    frame, agreement = experiments.rollout_worldmodel(agent, cfg.plant, trajectory, args.steps, cfg.eval.seed)
    path = reports.write_table(out / "rollout.csv", frame)
    reports.write_figure(out / "figures" / "rollout.html", reports.rollout_figure(frame, agreement))
    write_manifest(out, "rollout-worldmodel", cfg, extra={"agreement": agreement, "steps": args.steps}, files=[path])
    print(json.dumps({"rows": len(frame), "agreement": agreement}))


def cmd_gen_trajectories(args) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    paths = experiments.gen_trajectories(cfg, out)
    write_manifest(out, "gen-trajectories", cfg, files=paths)
    print(json.dumps({"written": len(paths), "out": str(out)}))


def cmd_tune_pid(args) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    gains, grid = experiments.tune_pid(cfg)
    reports.write_table(out / "pid_refinement.csv", grid)
    tuned = dump_tracker_config(cfg.model_copy(update={"pid": section_with_gains(cfg.pid, gains)}), out / TUNED_CONFIG_FILE)
    write_manifest(out, "tune-pid", cfg, extra={"pid_gains": gains.as_dict()}, files=[out / "pid_refinement.csv", tuned])
    print(json.dumps(gains.as_dict()))


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare-pid": cmd_compare_pid,
    "finetune": cmd_finetune,
    "rollout-worldmodel": cmd_rollout_worldmodel,
    "gen-trajectories": cmd_gen_trajectories,
    "tune-pid": cmd_tune_pid,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracker", description="Trajectory-conditioned world-model RL for a muscle joint")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML run configuration (default: $TRACKER_CONFIG or built-in defaults)")
    parser.add_argument("--seed", type=int, help="override train.seed")
    parser.add_argument("--sync", action="store_true", help="single-threaded, reproducible training")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--checkpoint", help="agent checkpoint from a train run")
    parser.add_argument("--perturb", type=float, default=0.1, help="plant perturbation magnitude for finetune")
    parser.add_argument("--suite", help="directory of trajectory CSVs to evaluate on instead of the built-in suite")
    parser.add_argument("--trajectory", help="trajectory CSV for rollout-worldmodel")
    parser.add_argument("--steps", type=int, default=200, help="rollout-worldmodel length")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        COMMANDS[args.command](args)
    except TrackerError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        logger.exception("%s failed", args.command)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
