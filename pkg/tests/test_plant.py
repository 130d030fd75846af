import math

import numpy as np
import pandas as pd
import pytest

from errors import ConfigError, PlantError
from plant.muscle import muscle_force, pressure_step
from plant.params import MuscleParams, PlantConfig
from plant.simulator import (
    MuscleFingerPlant, PlantState, hysteresis_loop_area, plant_perturb, plant_reset, plant_step,
    triangular_pressure_cycle,
)
from plant.traces import TRACE_COLUMNS, trace_frame, write_trace_csv


def quiet_config(**updates) -> PlantConfig:
    return PlantConfig(**updates).noiseless()


def run(config: PlantConfig, state: PlantState, actions, seed: int = 0) -> list[PlantState]:
    rng = np.random.default_rng(seed)
    states = []
    for action in actions:
        state, _ = plant_step(state, action, config, rng)
        states.append(state)
    return states


REST = PlantState(angle_deg=0.0, velocity_dps=0.0, pressures_kpa=(0.0, 0.0))


class TestMuscle:
    def test_zero_pressure(self):
        assert muscle_force(0.0, 0.2, MuscleParams()) == 0.0

    def test_zero_at_max_contraction(self):
        params = MuscleParams()
        assert muscle_force(300.0, params.max_contraction, params) == pytest.approx(0.0, abs=1e-9)

    def test_closed_form(self):
        params = MuscleParams()
        theta0 = math.radians(25.0)
        a, b = 3 / math.tan(theta0) ** 2, 1 / math.sin(theta0) ** 2
        expected = math.pi * 1.25e-3 ** 2 * 100e3 * (a - b)
        assert muscle_force(100.0, 0.0, params) == pytest.approx(expected, rel=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(PlantError):
            muscle_force(100.0, 1.0, MuscleParams())
        with pytest.raises(PlantError):
            muscle_force(-1.0, 0.1, MuscleParams())

    def test_pressure_step(self):
        assert pressure_step(120.0, 120.0, 0.1, 0.15) == 120.0
        assert pressure_step(0.0, 200.0, 10.0, 0.15) == pytest.approx(200.0, rel=0.01)
        assert pressure_step(100.0, 300.0, 0.15 * math.log(2), 0.15) == pytest.approx(200.0)
        with pytest.raises(PlantError):
            pressure_step(0.0, 100.0, 0.0, 0.15)


class TestPlantStep:
    def test_equal_pressures_keep_symmetric_joint_still(self):
        config = quiet_config(gravity_torque=0.0)
        states = run(config, REST, [(150.0, 150.0)] * 100)
        assert all(abs(s.angle_deg) < 1e-12 for s in states)

    def test_zero_pressure_is_fixed_point(self):
        config = quiet_config(gravity_torque=0.0)
        states = run(config, REST, [(0.0, 0.0)] * 20)
        assert all(abs(s.angle_deg) < 1e-9 for s in states)

    def test_flexor_step_moves_joint_up_monotonically(self):
        config = quiet_config(gravity_torque=0.0)
        angles = [s.angle_deg for s in run(config, REST, [(200.0, 0.0)] * 60)]
        assert np.all(np.diff(angles) >= -1e-12)
        assert angles[-1] > 0
        assert abs(angles[-1] - angles[-2]) < 1e-6

    def test_determinism(self):
        config = PlantConfig()
        actions = np.random.default_rng(3).uniform(0, 500, size=(50, 2))
        a = MuscleFingerPlant(config, seed=7)
        b = MuscleFingerPlant(config, seed=7)
        a.reset(7)
        b.reset(7)
        for action in actions:
            np.testing.assert_array_equal(a.step(action).vector, b.step(action).vector)

    def test_pressures_stay_in_bounds(self):
        config = PlantConfig()
        actions = np.random.default_rng(1).uniform(-300, 900, size=(100, 2))
        for state in run(config, REST, actions):
            assert all(0.0 <= p <= 500.0 for p in state.pressures_kpa)

    def test_out_of_range_action_is_flagged(self):
        (state,) = run(PlantConfig(), REST, [(900.0, -5.0)])
        assert state.action_clamped

    def test_wrong_action_shape(self):
        with pytest.raises(PlantError):
            run(PlantConfig(), REST, [(1.0, 2.0, 3.0)])

    def test_kinetic_energy_never_grows_without_drive(self):
        config = quiet_config(gravity_torque=0.0)
        start = PlantState(angle_deg=0.0, velocity_dps=150.0, pressures_kpa=(0.0, 0.0))
        speeds = [abs(s.velocity_dps) for s in run(config, start, [(0.0, 0.0)] * 40)]
        assert np.all(np.diff([150.0] + speeds) <= 1e-12)

    def test_mirrored_plant_negates_angle(self):
        config = quiet_config(gravity_torque=0.0)
        mirror = config.mirrored()
        rng = np.random.default_rng(5)
        actions = [(100 + d, 100 - d) for d in rng.uniform(-5, 5, size=60)]
        start = PlantState(angle_deg=2.0, velocity_dps=0.0, pressures_kpa=(100.0, 100.0))
        flipped = PlantState(angle_deg=-2.0, velocity_dps=0.0, pressures_kpa=(100.0, 100.0))
        ours = run(config, start, actions)
        theirs = run(mirror, flipped, [(e, f) for f, e in actions])
        for a, b in zip(ours, theirs):
            assert abs(a.angle_deg + b.angle_deg) < 1e-6


class TestReset:
    def test_same_seed(self):
        assert plant_reset(PlantConfig(), 4) == plant_reset(PlantConfig(), 4)

    def test_range(self):
        angles = [plant_reset(PlantConfig(), s).angle_deg for s in range(1000)]
        assert min(angles) >= -5.0 and max(angles) <= 5.0

    def test_different_seeds(self):
        assert plant_reset(PlantConfig(), 1) != plant_reset(PlantConfig(), 2)


class TestPerturb:
    def test_zero_is_identity(self):
        config = PlantConfig()
        assert plant_perturb(config, 0.0, seed=1) == config

    def test_reproducible(self):
        a = plant_perturb(PlantConfig(), 0.1, seed=1)
        b = plant_perturb(PlantConfig(), 0.1, seed=1)
        assert a == b
        assert a.flexor != PlantConfig().flexor
        assert a.control_period_s == PlantConfig().control_period_s

    def test_pressure_range_is_kept(self):
        for seed in range(5):
            perturbed = plant_perturb(PlantConfig(), 0.3, seed=seed)
            assert perturbed.flexor.max_pressure_kpa == 500.0
            assert perturbed.extensor.max_pressure_kpa == 500.0
            assert perturbed.flexor.resting_length_m != PlantConfig().flexor.resting_length_m

    def test_range_checked(self):
        with pytest.raises(ConfigError):
            plant_perturb(PlantConfig(), 0.5, seed=1)


class TestHysteresis:
    CYCLE = triangular_pressure_cycle(80.0, 160.0, 9)
    FULL_SCALE = 80.0 * 75.0

    @staticmethod
    def with_friction(c_h: float) -> PlantConfig:
        return PlantConfig(flexor=MuscleParams(friction_n=c_h), extensor=MuscleParams(friction_n=c_h))

    def test_no_friction_no_loop(self):
        area = hysteresis_loop_area(self.with_friction(0.0), self.CYCLE)
        assert abs(area) < 1e-3 * self.FULL_SCALE

    def test_friction_opens_loop(self):
        small = hysteresis_loop_area(self.with_friction(0.2), self.CYCLE)
        large = hysteresis_loop_area(self.with_friction(0.4), self.CYCLE)
        assert small > 1e-3 * self.FULL_SCALE
        assert large > small

    def test_cycle_must_close(self):
        with pytest.raises(PlantError):
            hysteresis_loop_area(PlantConfig(), [80.0, 120.0])


def test_trace_frame_columns(tmp_path):
    observations = np.arange(12.0).reshape(3, 4)
    actions = np.ones((3, 2))
    frame = trace_frame(observations, actions)
    assert list(frame.columns) == TRACE_COLUMNS
    path = write_trace_csv(tmp_path / "trace.csv", frame)
    loaded = pd.read_csv(path)
    np.testing.assert_allclose(loaded["theta_deg"], [0.0, 4.0, 8.0])
    assert "target_deg" in trace_frame(observations, actions, np.zeros(3)).columns
