"""
Target trajectories: generators, windows, CSV storage and the evaluation suite.

A trajectory holds target angles (deg) and angular velocities (deg/s) per step
at dt = 0.1 s. Velocities are forward differences, with the last step holding
the previous value. Stepwise trajectories report each jump at the last step of
the old level, the step whose forward difference spans it.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from errors import ConfigError, TrajectoryFormatError

DT = 0.1
DEFAULT_RANGE = (-25.0, 40.0)
CSV_HEADER = ["step", "angle_deg", "velocity_dps"]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def forward_velocity(angles: np.ndarray, dt: float = DT) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    vel = np.zeros_like(angles)
    if len(angles) > 1:
        vel[:-1] = np.diff(angles, axis=0) / dt
        vel[-1] = vel[-2]
    return vel


@dataclass(frozen=True)
class Trajectory:
    angles: np.ndarray
    velocities: np.ndarray
    name: str = "trajectory"
    dt: float = DT
    jump_steps: tuple[int, ...] = field(default=())

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64)
        velocities = np.asarray(self.velocities, dtype=np.float64)
        if angles.ndim == 1:
            angles = angles[:, None]
        if velocities.ndim == 1:
            velocities = velocities[:, None]
        if angles.shape != velocities.shape or len(angles) == 0:
            raise ConfigError(f"trajectory angles {angles.shape} / velocities {velocities.shape} mismatch")
        object.__setattr__(self, "angles", _readonly(angles))
        object.__setattr__(self, "velocities", _readonly(velocities))

    @classmethod
    def from_angles(cls, angles, name: str = "trajectory", dt: float = DT) -> "Trajectory":
        angles = np.asarray(angles, dtype=np.float64)
        return cls(angles, forward_velocity(angles, dt), name=name, dt=dt)

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def n_joints(self) -> int:
        return self.angles.shape[1]

    @property
    def target_angles(self) -> np.ndarray:
        """Angles of the first joint, shape (T,)."""
        return self.angles[:, 0]

    def in_range(self, range_deg: tuple[float, float]) -> bool:
        lo, hi = range_deg
        return bool(np.all(self.angles >= lo - 1e-9) and np.all(self.angles <= hi + 1e-9))

    def slice(self, start: int, length: int) -> "Trajectory":
        return Trajectory(self.angles[start:start + length], self.velocities[start:start + length],
                          name=self.name, dt=self.dt)


# -- generators ----------------------------------------------------------------


def gen_random_walk(range_deg: tuple[float, float], max_step: float, length: int, seed: int,
                    name: str | None = None) -> Trajectory:
    lo, hi = range_deg
    if not lo < hi or max_step < 0:
        raise ConfigError(f"invalid random walk range {range_deg} / max_step {max_step}")
    rng = np.random.default_rng(seed)
    steps = rng.uniform(-max_step, max_step, size=length - 1)
    angles = np.empty(length)
    angles[0] = min(max(0.0, lo), hi)
    for t in range(1, length):
        angles[t] = min(max(angles[t - 1] + steps[t - 1], lo), hi)
    return Trajectory.from_angles(angles, name=name or f"random_walk_{lo:g}_{hi:g}")


def gen_constant_velocity(speed: float, range_deg: tuple[float, float], length: int,
                          name: str | None = None) -> Trajectory:
    """Triangular wave at |speed| deg/s between the range bounds; negative speed starts downwards."""
    if speed == 0:
        raise ConfigError("constant-velocity trajectory needs a non-zero speed")
    lo, hi = range_deg
    increment = abs(speed) * DT
    direction = 1.0 if speed > 0 else -1.0
    angles = np.empty(length)
    angles[0] = min(max(0.0, lo), hi)
    for t in range(1, length):
        nxt = angles[t - 1] + direction * increment
        if nxt >= hi:
            nxt, direction = hi, -1.0
        elif nxt <= lo:
            nxt, direction = lo, 1.0
        angles[t] = nxt
    return Trajectory.from_angles(angles, name=name or f"constant_velocity_{abs(speed):g}dps")


def gen_stepwise(delta: float, period: int, range_deg: tuple[float, float], length: int,
                 name: str | None = None) -> Trajectory:
    """Hold, then jump by `delta` every `period` steps, reversing direction at the bounds."""
    if period < 1:
        raise ConfigError("stepwise period must be at least 1")
    lo, hi = range_deg
    angles = np.empty(length)
    velocities = np.zeros(length)
    angles[0] = min(max(0.0, lo), hi)
    jumps = []
    for t in range(1, length):
        angles[t] = angles[t - 1]
        if t % period == 0 and delta != 0:
            nxt = angles[t - 1] + delta
            if nxt < lo or nxt > hi:
                delta = -delta
                nxt = min(max(angles[t - 1] + delta, lo), hi)
            angles[t] = nxt
            velocities[t - 1] = (nxt - angles[t - 1]) / DT
            jumps.append(t - 1)
    return Trajectory(angles, velocities, name=name or f"step_{delta:+g}_per_{period}",
                      jump_steps=tuple(jumps))


def gen_sinusoid(amplitude: float, period: int, offset: float, length: int,
                 range_deg: tuple[float, float] = DEFAULT_RANGE, name: str | None = None) -> Trajectory:
    lo, hi = range_deg
    if amplitude <= 0:
        raise ConfigError("sinusoid amplitude must be positive")
    if offset - amplitude < lo or offset + amplitude > hi:
        raise ConfigError(f"sinusoid {offset}+/-{amplitude} leaves range {range_deg}")
    t = np.arange(length)
    angles = offset + amplitude * np.sin(2.0 * np.pi * t / period)
    return Trajectory.from_angles(angles, name=name or f"sin_A{amplitude:g}_P{period}")


# -- windows ---------------------------------------------------------------------


def window(traj: Trajectory, t: int, l: int) -> np.ndarray:
    """
    Targets for steps t..t+l-1 as [angles..., velocities...] (length 2*l*n).
    Steps past the end hold the final angle with zero velocity.
    """
    if not 0 <= t < len(traj):
        raise IndexError(f"window start {t} outside trajectory of length {len(traj)}")
    idx = np.arange(t, t + l)
    past_end = idx >= len(traj)
    idx = np.minimum(idx, len(traj) - 1)
    angles = traj.angles[idx]
    velocities = np.where(past_end[:, None], 0.0, traj.velocities[idx])
    return np.concatenate([angles.reshape(-1), velocities.reshape(-1)])


def all_windows(traj: Trajectory, l: int) -> np.ndarray:
    """Every window of the trajectory stacked, shape (T, 2*l*n)."""
    return np.stack([window(traj, t, l) for t in range(len(traj))])


# -- CSV ---------------------------------------------------------------------------


def save_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({
        "step": np.arange(len(traj)),
        "angle_deg": traj.target_angles,
        "velocity_dps": traj.velocities[:, 0],
    }, columns=CSV_HEADER)
    df.to_csv(path, index=False, float_format="%.9f")
    return path


def load_csv(path: str | Path, name: str | None = None) -> Trajectory:
    path = Path(path)
    if not path.read_text().strip():
        raise TrajectoryFormatError(f"{path} is empty")
    try:
        df = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise TrajectoryFormatError(f"malformed row in {path}", int(match.group(1)) if match else None) from exc
    if [c.strip() for c in df.columns] != CSV_HEADER:
        raise TrajectoryFormatError(f"expected header {','.join(CSV_HEADER)}", line=1)
    if df.empty:
        raise TrajectoryFormatError("no data rows")
    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = np.flatnonzero(numeric.isna().any(axis=1).to_numpy())
    if len(bad):
        raise TrajectoryFormatError(f"malformed row in {path}", line=int(bad[0]) + 2)
    return Trajectory(numeric["angle_deg"].to_numpy(), numeric["velocity_dps"].to_numpy(),
                      name=name or path.stem)


# -- trajectory sets ---------------------------------------------------------------


def eval_suite(range_deg: tuple[float, float] = DEFAULT_RANGE, length: int = 200) -> list[Trajectory]:
    """
    The ten evaluation trajectories: four random walks over different ranges,
    two constant velocities, two stepwise and two sinusoids. Seeds are fixed.
    """
    lo, hi = range_deg

    def sub(a: float, b: float) -> tuple[float, float]:
        return max(a, lo), min(b, hi)

    mid = 0.5 * (lo + hi)
    return [
        gen_random_walk(sub(-25, 40), 3.0, length, seed=101),
        gen_random_walk(sub(-10, 30), 3.0, length, seed=102),
        gen_random_walk(sub(0, 40), 3.0, length, seed=103),
        gen_random_walk(sub(-25, 10), 3.0, length, seed=104),
        gen_constant_velocity(10.0, range_deg, length),
        gen_constant_velocity(5.0, range_deg, length),
        gen_stepwise(-5.0, 20, range_deg, length, name="step_-5_per_20"),
        gen_stepwise(4.0, 20, range_deg, length, name="step_+4_per_20"),
        gen_sinusoid(min(20.0, 0.5 * (hi - lo)), 60, mid, length, range_deg, name="sin_A20_P60"),
        gen_sinusoid(min(15.0, 0.5 * (hi - lo)), 30, mid, length, range_deg, name="sin_A15_P30"),
    ]


def training_set(kind: str, count: int, length: int, range_deg: tuple[float, float],
                 max_step: float, seed: int) -> list[Trajectory]:
    """
    Training trajectories. "experiment1": random walks only. "experiment2":
    random walks plus four constant speeds clipped to [0, 40] deg.
    """
    walks = [gen_random_walk(range_deg, max_step, length, seed=seed + i, name=f"train_walk_{i}")
             for i in range(count)]
    if kind == "experiment1":
        return walks
    if kind == "experiment2":
        clipped = (max(range_deg[0], 0.0), min(range_deg[1], 40.0))
        speeds = [2.5, 5.0, 7.5, 10.0]
        return walks + [gen_constant_velocity(s, clipped, length, name=f"train_speed_{s:g}") for s in speeds]
    raise ConfigError(f"unknown trajectory set '{kind}'")


def held_out_set(range_deg: tuple[float, float], max_step: float, length: int, count: int = 3,
                 seed: int = 9000) -> list[Trajectory]:
    return [gen_random_walk(range_deg, max_step, length, seed=seed + i, name=f"heldout_walk_{i}")
            for i in range(count)]
