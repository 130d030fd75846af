"""
Parameters of the simulated antagonistic McKibben joint.

Defaults are plausibility choices for a thin (2.5 mm diameter) muscle pair on a
single finger-like joint, not measured hardware values. Angles cross module
boundaries in degrees; the braid angle is stored in radians.

Sleeve friction defaults to 0.2 N rather than the 2 N first proposed for this
plant: at 2 N the friction torque exceeds what the thin muscle pair develops
over most of its pressure range, so the joint sticks inside the friction band
or pins against a stop. 0.2 N keeps a clearly non-zero hysteresis loop.
"""

import math

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, field_validator, model_validator

CONTROL_PERIOD_S = 0.1


class MuscleParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resting_radius_m: PositiveFloat = 1.25e-3
    braid_angle_rad: PositiveFloat = math.radians(25.0)
    resting_length_m: PositiveFloat = 0.15
    moment_arm_m: PositiveFloat = 0.01
    pressure_time_constant_s: PositiveFloat = 0.15
    max_pressure_kpa: PositiveFloat = 500.0
    friction_n: NonNegativeFloat = 0.2  # N; see module docstring

    @field_validator("braid_angle_rad")
    @classmethod
    def _braid_angle_range(cls, v: float) -> float:
        if not 0.0 < v < math.pi / 2:
            raise ValueError("braid angle must lie in (0, pi/2)")
        return v

    @property
    def braid_a(self) -> float:
        return 3.0 / math.tan(self.braid_angle_rad) ** 2

    @property
    def braid_b(self) -> float:
        return 1.0 / math.sin(self.braid_angle_rad) ** 2

    @property
    def max_contraction(self) -> float:
        return 1.0 - math.sqrt(self.braid_b / self.braid_a)


class PlantConfig(BaseModel):
    """`plant.*` section of the run configuration."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    flexor: MuscleParams = Field(default_factory=MuscleParams)
    extensor: MuscleParams = Field(default_factory=MuscleParams)
    link_inertia: PositiveFloat = 2e-4
    joint_damping: NonNegativeFloat = 1e-3
    gravity_torque: float = 5e-3
    rest_contraction: NonNegativeFloat = 0.1
    hard_stops_deg: tuple[float, float] = (-30.0, 45.0)
    control_period_s: PositiveFloat = CONTROL_PERIOD_S
    dt_inner_s: PositiveFloat = 0.005
    noise_angle_deg: NonNegativeFloat = 0.3
    noise_velocity_dps: NonNegativeFloat = 1.0
    noise_pressure_kpa: NonNegativeFloat = 2.0
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "PlantConfig":
        ratio = self.control_period_s / self.dt_inner_s
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_inner_s must divide the control period")
        lo, hi = self.hard_stops_deg
        if not lo < hi:
            raise ValueError("hard_stops_deg must be increasing")
        for muscle in (self.flexor, self.extensor):
            if self.rest_contraction >= muscle.max_contraction:
                raise ValueError("rest_contraction exceeds the braid's maximum contraction")
        return self

    @property
    def substeps(self) -> int:
        return int(round(self.control_period_s / self.dt_inner_s))

    @property
    def max_pressure_kpa(self) -> float:
        return min(self.flexor.max_pressure_kpa, self.extensor.max_pressure_kpa)

    @property
    def muscles(self) -> tuple[MuscleParams, MuscleParams]:
        return self.flexor, self.extensor

    def noiseless(self) -> "PlantConfig":
        return self.model_copy(update={"noise_angle_deg": 0.0, "noise_velocity_dps": 0.0, "noise_pressure_kpa": 0.0})

    def frictionless(self) -> "PlantConfig":
        return self.model_copy(update={"flexor": self.flexor.model_copy(update={"friction_n": 0.0}),
                                       "extensor": self.extensor.model_copy(update={"friction_n": 0.0})})

    def mirrored(self) -> "PlantConfig":
        """Swap the muscles and negate gravity."""
        return self.model_copy(update={"flexor": self.extensor, "extensor": self.flexor,
                                       "gravity_torque": -self.gravity_torque})
