"""
PID baseline: angle-error PID mapped to antagonistic pressures around a
co-contraction bias, tuned by the closed-loop (ultimate gain) Ziegler-Nichols
rule and refined by a small grid search.

Gains are in kPa per deg (Kp), kPa per deg*s (Ki) and kPa per deg/s (Kd).
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd

from config import PidSection
from errors import ConfigError, TuningError
from plant.params import PlantConfig
from plant.simulator import MuscleFingerPlant
from tracking.reward import mse
from tracking.trajectory import Trajectory

logger = logging.getLogger(__name__)

CONTROL_DT = 0.1


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ConfigError(f"Kp must be positive, got {self.kp}")
        if self.ki < 0 or self.kd < 0:
            raise ConfigError(f"Ki and Kd must be non-negative, got {self}")

    def scaled(self, factor: float) -> "PidGains":
        return PidGains(self.kp * factor, self.ki * factor, self.kd * factor)

    def as_dict(self) -> dict[str, float]:
        return {"kp": self.kp, "ki": self.ki, "kd": self.kd}


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0


@dataclass(frozen=True)
class ZieglerNicholsResult:
    gains: PidGains
    ultimate_gain: float
    ultimate_period_s: float


def pid_step(error: float, state: PidState, gains: PidGains, dt: float,
             integral_limit: float = float("inf")) -> tuple[float, PidState]:
    """u = Kp e + Ki I + Kd (e - e_prev) / dt, with |I| clamped to integral_limit."""
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    integral = float(np.clip(state.integral + error * dt, -integral_limit, integral_limit))
    derivative = (error - state.prev_error) / dt
    u = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return u, PidState(integral=integral, prev_error=error)


def map_to_pressures(u: float, bias: float, p_max: float) -> np.ndarray:
    """Flexor gets bias + u, extensor bias - u, both clamped to [0, p_max]."""
    if not 0.0 <= bias <= 0.5 * p_max:
        raise ConfigError(f"bias {bias} outside [0, {0.5 * p_max}]")
    return np.clip(np.array([bias + u, bias - u]), 0.0, p_max)


def zn_classic_gains(ultimate_gain: float, ultimate_period_s: float) -> PidGains:
    kp = 0.6 * ultimate_gain
    return PidGains(kp=kp, ki=kp / (0.5 * ultimate_period_s), kd=kp * 0.125 * ultimate_period_s)


class PidController:
    def __init__(self, gains: PidGains, p_max: float, cfg: PidSection = PidSection(), dt: float = CONTROL_DT):
        self.gains = gains
        self.p_max = p_max
        self.bias = cfg.bias_fraction * p_max
        self.integral_limit = cfg.integral_limit
        self.dt = dt
        self.state = PidState()

    def reset(self) -> None:
        self.state = PidState()

    def act(self, angle_deg: float, target_deg: float) -> np.ndarray:
        u, self.state = pid_step(target_deg - angle_deg, self.state, self.gains, self.dt, self.integral_limit)
        return map_to_pressures(u, self.bias, self.p_max)


def run_pid(plant_config: PlantConfig, gains: PidGains, targets: np.ndarray, seed: int,
            cfg: PidSection = PidSection()) -> tuple[np.ndarray, np.ndarray]:
    """
    Closed-loop run over `targets` (deg). At step t the controller acts on the
    current measurement and target t; returns the observations after each step
    (T, 4) and the actions (T, 2).
    """
    plant = MuscleFingerPlant(plant_config, seed=seed)
    obs = plant.reset(seed)
    controller = PidController(gains, plant_config.max_pressure_kpa, cfg)
    observations, actions = [], []
    for target in np.asarray(targets, dtype=np.float64):
        action = controller.act(obs.angle, float(target))
        obs = plant.step(action)
        observations.append(obs.vector)
        actions.append(action)
    return np.array(observations), np.array(actions)


def detect_sustained_oscillation(signal, dt: float, min_peaks: int = 4, ratio_band: tuple[float, float] = (0.9, 1.1),
                                 min_amplitude: float = 0.2) -> tuple[bool, float]:
    """
    Look for at least `min_peaks` peaks in the second half of `signal` whose
    consecutive amplitude ratios all fall inside `ratio_band`. Returns
    (sustained, period in seconds); the period is 0 when nothing was found.
    """
    x = np.asarray(signal, dtype=np.float64)
    x = x[len(x) // 2:]
    if len(x) < 3:
        return False, 0.0
    centered = x - x.mean()
    interior = centered[1:-1]
    is_peak = (interior > centered[:-2]) & (interior >= centered[2:]) & (interior > min_amplitude)
    peaks = np.flatnonzero(is_peak) + 1
    if len(peaks) < min_peaks:
        return False, 0.0
    amplitudes = centered[peaks]
    ratios = amplitudes[1:] / amplitudes[:-1]
    lo, hi = ratio_band
    if not np.all((ratios >= lo) & (ratios <= hi)):
        return False, 0.0
    return True, float(np.mean(np.diff(peaks)) * dt)


def peak_period(signal, dt: float) -> float:
    """Mean spacing of the local maxima of `signal` in seconds; 0 with fewer than two."""
    x = np.asarray(signal, dtype=np.float64)
    if len(x) < 3:
        return 0.0
    peaks = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:])) + 1
    if len(peaks) < 2:
        return 0.0
    return float(np.mean(np.diff(peaks)) * dt)


@dataclass(frozen=True)
class TrialOutcome:
    kind: Literal["stable", "sustained", "unstable"]
    period_s: float = 0.0


def limit_contact(observations: np.ndarray, actions: np.ndarray, plant_config: PlantConfig,
                  cfg: PidSection = PidSection()) -> int | None:
    """First step whose angle is within `cfg.stop_margin_deg` of a hard stop or whose command saturates."""
    lo, hi = plant_config.hard_stops_deg
    angles = observations[:, 0]
    at_stop = (angles <= lo + cfg.stop_margin_deg) | (angles >= hi - cfg.stop_margin_deg)
    saturated = np.any(actions >= plant_config.max_pressure_kpa, axis=1)
    if cfg.bias_fraction > 0:
        saturated |= np.any(actions <= 0.0, axis=1)
    hits = np.flatnonzero(at_stop | saturated)
    return int(hits[0]) if len(hits) else None


def ultimate_gain_trial(plant_config: PlantConfig, kp: float, cfg: PidSection, steps: int,
                        seed: int) -> TrialOutcome:
    """
    P-only step response to `cfg.setpoint_deg`. A run that reaches a stop or
    saturates a muscle is unstable, whatever its peaks look like; its period is
    read from the oscillation before that contact.
    """
    observations, actions = run_pid(plant_config, PidGains(kp=kp), np.full(steps, cfg.setpoint_deg), seed, cfg)
    contact = limit_contact(observations, actions, plant_config, cfg)
    if contact is not None:
        outcome = TrialOutcome("unstable", peak_period(observations[:contact, 0], CONTROL_DT))
    else:
        sustained, period = detect_sustained_oscillation(observations[:, 0], CONTROL_DT)
        outcome = TrialOutcome("sustained", period) if sustained else TrialOutcome("stable")
    logger.debug("ZN trial Kp=%.4f -> %s (period %.2fs)", kp, outcome.kind, outcome.period_s)
    return outcome


def ziegler_nichols_tune(plant_config: PlantConfig, cfg: PidSection = PidSection(), steps: int = 300,
                         seed: int = 0) -> ZieglerNicholsResult:
    """
    Raise a P-only gain by 1.3x per trial until the step response to
    `cfg.setpoint_deg` oscillates steadily; that gain is the ultimate gain.
    When a trial diverges first, the gain is bisected between the last stable
    and the first unstable trial; after `cfg.bisect_steps` halvings the
    largest stable gain is taken as Ku.

    Trials run on the plant without sensor noise and without sleeve friction:
    friction holds small oscillations still at gains well past the point
    where larger excursions diverge.
    """
    linear = plant_config.noiseless().frictionless()
    kp, last_stable = cfg.kp_start, None
    while kp <= cfg.kp_max:
        trial = ultimate_gain_trial(linear, kp, cfg, steps, seed)
        if trial.kind == "sustained":
            return _zn_result(kp, trial.period_s)
        if trial.kind == "unstable":
            if last_stable is None:
                raise TuningError(f"closed loop already unstable at Kp={kp}; lower pid.kp_start")
            return _bisect_ultimate_gain(linear, last_stable, kp, trial, cfg, steps, seed)
        last_stable = kp
        kp *= 1.3
    raise TuningError(f"plant not tunable by ZN under bound Kp <= {cfg.kp_max}")


def _bisect_ultimate_gain(plant_config: PlantConfig, lo: float, hi: float, hi_trial: TrialOutcome,
                          cfg: PidSection, steps: int, seed: int) -> ZieglerNicholsResult:
    for _ in range(cfg.bisect_steps):
        mid = float(np.sqrt(lo * hi))
        trial = ultimate_gain_trial(plant_config, mid, cfg, steps, seed)
        if trial.kind == "sustained":
            return _zn_result(mid, trial.period_s)
        if trial.kind == "unstable":
            hi, hi_trial = mid, trial
        else:
            lo = mid
    if hi_trial.period_s <= 0:
        raise TuningError(f"no oscillation period before divergence at Kp={hi:.4f}")
    return _zn_result(lo, hi_trial.period_s)


def _zn_result(ultimate_gain: float, ultimate_period_s: float) -> ZieglerNicholsResult:
    gains = zn_classic_gains(ultimate_gain, ultimate_period_s)
    logger.info("Ziegler-Nichols: Ku=%.3f Tu=%.2fs -> Kp=%.3f Ki=%.3f Kd=%.3f",
                ultimate_gain, ultimate_period_s, gains.kp, gains.ki, gains.kd)
    return ZieglerNicholsResult(gains, ultimate_gain, ultimate_period_s)


def refine_gains(plant_config: PlantConfig, gains: PidGains, trajectory: Trajectory, cfg: PidSection = PidSection(),
                 seed: int = 0) -> tuple[PidGains, pd.DataFrame]:
    """Try every gain at (1 - f, 1, 1 + f) times its value and keep the lowest tracking MSE."""
    f = cfg.refine_fraction
    factors = (1.0 - f, 1.0, 1.0 + f)
    rows = []
    for fp, fi, fd in itertools.product(factors, repeat=3):
        candidate = PidGains(gains.kp * fp, gains.ki * fi, gains.kd * fd)
        observations, _ = run_pid(plant_config, candidate, trajectory.target_angles, seed, cfg)
        rows.append({**candidate.as_dict(), "mse": mse(observations[:, 0], trajectory.target_angles)})
    grid = pd.DataFrame(rows).sort_values("mse", kind="stable").reset_index(drop=True)
    best = grid.iloc[0]
    refined = PidGains(float(best["kp"]), float(best["ki"]), float(best["kd"]))
    logger.info("Refined PID gains %s (MSE %.2f)", refined.as_dict(), best["mse"])
    return refined, grid


def gains_from_section(cfg: PidSection) -> PidGains | None:
    if not cfg.gains_set:
        return None
    return PidGains(cfg.kp, cfg.ki or 0.0, cfg.kd or 0.0)


def section_with_gains(cfg: PidSection, gains: PidGains) -> PidSection:
    return cfg.model_copy(update=gains.as_dict())
