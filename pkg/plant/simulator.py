"""
Antagonistic McKibben joint simulator.

One joint driven by a flexor and an extensor muscle, stepped at the 100 ms
control period with semi-implicit Euler sub-steps:

    I th'' = rho_f F_f - rho_e F_e - b th' - g cos(th) - tau_friction

Muscle contraction is rest_contraction +/- rho th / L0 (flexor shortens as the
angle grows). Sleeve friction is a rate-independent Coulomb torque of total
magnitude rho * c_h applied at the velocity level, so the joint sticks while
the net torque stays inside the friction band; this is what opens the
loading/unloading hysteresis loop. Hard stops clamp the angle and zero the
velocity.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import ConfigError, NonFiniteError, PlantError
from plant.muscle import muscle_force, pressure_step
from plant.params import MuscleParams, PlantConfig

logger = logging.getLogger(__name__)

N_JOINTS = 1
N_MUSCLES = 2
OBS_DIM = 2 * N_JOINTS + N_MUSCLES
FIXED_UNDER_PERTURBATION = ("max_pressure_kpa",)


@dataclass(frozen=True)
class PlantState:
    angle_deg: float
    velocity_dps: float
    pressures_kpa: tuple[float, float]
    friction_n: tuple[float, float] = (0.0, 0.0)
    action_clamped: bool = False


@dataclass(frozen=True)
class Observation:
    angles_deg: np.ndarray
    velocities_dps: np.ndarray
    pressures_kpa: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.angles_deg, self.velocities_dps, self.pressures_kpa])

    @property
    def angle(self) -> float:
        return float(self.angles_deg[0])

    @property
    def velocity(self) -> float:
        return float(self.velocities_dps[0])


def clamp_action(action, config: PlantConfig) -> tuple[tuple[float, float], bool]:
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    if action.shape != (N_MUSCLES,):
        raise PlantError(f"action must have {N_MUSCLES} pressures, got shape {action.shape}")
    limits = np.array([m.max_pressure_kpa for m in config.muscles])
    clamped = np.clip(action, 0.0, limits)
    return (float(clamped[0]), float(clamped[1])), bool(np.any(clamped != action))


def _contraction(angle_rad: float, muscle: MuscleParams, rest: float, sign: float) -> float:
    eps = rest + sign * muscle.moment_arm_m * angle_rad / muscle.resting_length_m
    return min(max(eps, 0.0), muscle.max_contraction)


def observe(state: PlantState, config: PlantConfig, rng: np.random.Generator) -> Observation:
    noise = rng.normal(size=OBS_DIM)
    return Observation(
        angles_deg=np.array([state.angle_deg + config.noise_angle_deg * noise[0]]),
        velocities_dps=np.array([state.velocity_dps + config.noise_velocity_dps * noise[1]]),
        pressures_kpa=np.array(state.pressures_kpa) + config.noise_pressure_kpa * noise[2:],
    )


def plant_step(state: PlantState, action, config: PlantConfig,
               rng: np.random.Generator) -> tuple[PlantState, Observation]:
    """Advance one control period under commanded pressures; returns the new state and a noisy observation."""
    command, clamped = clamp_action(action, config)
    if clamped:
        logger.debug("Action %s clamped to %s", action, command)

    flexor, extensor = config.flexor, config.extensor
    dt = config.dt_inner_s
    inertia = config.link_inertia
    friction_max = 0.5 * (flexor.moment_arm_m * flexor.friction_n + extensor.moment_arm_m * extensor.friction_n)
    lo, hi = math.radians(config.hard_stops_deg[0]), math.radians(config.hard_stops_deg[1])

    theta = math.radians(state.angle_deg)
    omega = math.radians(state.velocity_dps)
    p_f, p_e = state.pressures_kpa
    friction_torque = 0.0

    for _ in range(config.substeps):
        p_f = pressure_step(p_f, command[0], dt, flexor.pressure_time_constant_s)
        p_e = pressure_step(p_e, command[1], dt, extensor.pressure_time_constant_s)
        f_f = muscle_force(p_f, _contraction(theta, flexor, config.rest_contraction, +1.0), flexor)
        f_e = muscle_force(p_e, _contraction(theta, extensor, config.rest_contraction, -1.0), extensor)
        torque = (flexor.moment_arm_m * f_f - extensor.moment_arm_m * f_e
                  - config.joint_damping * omega - config.gravity_torque * math.cos(theta))

        omega_free = omega + dt * torque / inertia
        impulse = dt * friction_max / inertia
        if abs(omega_free) <= impulse:
            friction_torque = omega_free * inertia / dt
            omega = 0.0
        else:
            friction_torque = math.copysign(friction_max, omega_free)
            omega = omega_free - math.copysign(impulse, omega_free)

        theta += dt * omega
        if theta < lo:
            theta, omega = lo, 0.0
        elif theta > hi:
            theta, omega = hi, 0.0

    if not all(math.isfinite(v) for v in (theta, omega, p_f, p_e)):
        raise NonFiniteError("plant state became non-finite")

    share = friction_torque / friction_max if friction_max > 0 else 0.0
    new_state = PlantState(
        angle_deg=math.degrees(theta),
        velocity_dps=math.degrees(omega),
        pressures_kpa=(p_f, p_e),
        friction_n=(0.5 * flexor.friction_n * share, 0.5 * extensor.friction_n * share),
        action_clamped=clamped,
    )
    return new_state, observe(new_state, config, rng)


def plant_reset(config: PlantConfig, seed: int) -> PlantState:
    rng = np.random.default_rng(seed)
    return PlantState(angle_deg=float(rng.uniform(-5.0, 5.0)), velocity_dps=0.0, pressures_kpa=(0.0, 0.0))


def plant_perturb(config: PlantConfig, magnitude: float, seed: int) -> PlantConfig:
    """
    Scale every physical muscle parameter by (1 + u), u ~ U(-magnitude, magnitude).
    The supply pressure range is part of the actuator interface and stays put.
    """
    if not 0.0 <= magnitude <= 0.3:
        raise ConfigError(f"perturbation magnitude {magnitude} outside [0, 0.3]")
    if magnitude == 0.0:
        return config
    rng = np.random.default_rng(seed)

    def scaled(muscle: MuscleParams) -> MuscleParams:
        values = muscle.model_dump(exclude=set(FIXED_UNDER_PERTURBATION))
        scaled_values = {k: v * (1.0 + rng.uniform(-magnitude, magnitude)) for k, v in values.items()}
        return MuscleParams(**{**muscle.model_dump(), **scaled_values})

    flexor = scaled(config.flexor)
    extensor = scaled(config.extensor)
    return PlantConfig(**{**config.model_dump(), "flexor": flexor.model_dump(), "extensor": extensor.model_dump()})


def triangular_pressure_cycle(low_kpa: float, high_kpa: float, levels: int) -> np.ndarray:
    up = np.linspace(low_kpa, high_kpa, levels)
    return np.concatenate([up, up[-2::-1]])


def hysteresis_loop_area(config: PlantConfig, pressure_cycle, extensor_kpa: float | None = None,
                         settle_steps: int = 30) -> float:
    """
    Signed area (deg*kPa) of the flexor-pressure/angle loop over one slow cycle.

    The flexor command steps through `pressure_cycle` while the extensor holds
    `extensor_kpa` (default 20% of max pressure); each level is held for
    `settle_steps` control periods before the noise-free state is recorded.
    Counter-clockwise loops (angle lagging on loading) are positive.
    """
    cycle = np.asarray(pressure_cycle, dtype=np.float64)
    if abs(cycle[0] - cycle[-1]) > 1e-9:
        raise PlantError("pressure cycle must start and end at the same pressure")
    if extensor_kpa is None:
        extensor_kpa = 0.2 * config.max_pressure_kpa
    quiet = config.noiseless()
    rng = np.random.default_rng(0)
    state = PlantState(angle_deg=0.0, velocity_dps=0.0, pressures_kpa=(0.0, 0.0))
    for _ in range(settle_steps):
        state, _ = plant_step(state, (cycle[0], extensor_kpa), quiet, rng)

    pressures, angles = [], []
    for p_cmd in cycle:
        for _ in range(settle_steps):
            state, _ = plant_step(state, (p_cmd, extensor_kpa), quiet, rng)
        pressures.append(state.pressures_kpa[0])
        angles.append(state.angle_deg)
    x = np.array(pressures)
    y = np.array(angles)
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class MuscleFingerPlant:
    """Stateful plant: owns its state and its sensor-noise RNG."""

    def __init__(self, config: PlantConfig, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.state = plant_reset(config, self.seed)

    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self.seed = seed
            self.rng = np.random.default_rng(seed)
        self.state = plant_reset(self.config, int(self.rng.integers(2**31)))
        return observe(self.state, self.config, self.rng)

    def step(self, action) -> Observation:
        self.state, obs = plant_step(self.state, action, self.config, self.rng)
        return obs
