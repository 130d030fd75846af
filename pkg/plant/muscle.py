"""
Static McKibben muscle force and first-order pressure dynamics.

Force follows the braid (Chou-Hannaford) model:
    F = pi r0^2 p [a (1 - eps)^2 - b],  a = 3 / tan^2(theta0),  b = 1 / sin^2(theta0)
clamped at zero once the muscle reaches its maximum contraction.
"""

import math

from errors import PlantError
from plant.params import MuscleParams

KPA_TO_PA = 1000.0


def muscle_force(pressure_kpa: float, contraction: float, params: MuscleParams) -> float:
    if pressure_kpa < 0:
        raise PlantError(f"negative pressure {pressure_kpa} kPa")
    if contraction >= 1.0:
        raise PlantError(f"contraction {contraction} must be below 1")
    bracket = params.braid_a * (1.0 - contraction) ** 2 - params.braid_b
    force = math.pi * params.resting_radius_m ** 2 * pressure_kpa * KPA_TO_PA * bracket
    return max(force, 0.0)


def pressure_step(p_kpa: float, p_cmd_kpa: float, dt_s: float, time_constant_s: float) -> float:
    """Exact first-order lag update over dt."""
    if dt_s <= 0:
        raise PlantError(f"dt must be positive, got {dt_s}")
    return p_kpa + (p_cmd_kpa - p_kpa) * (1.0 - math.exp(-dt_s / time_constant_s))
