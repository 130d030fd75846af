import numpy as np
import pytest
from pydantic import ValidationError

from config import PidSection
from control.pid import (
    PidController, PidGains, PidState, detect_sustained_oscillation, gains_from_section, limit_contact,
    map_to_pressures, peak_period, pid_step, refine_gains, run_pid, section_with_gains, ziegler_nichols_tune,
    zn_classic_gains,
)
from errors import ConfigError, TuningError
from plant.params import PlantConfig
from tracking.trajectory import gen_random_walk


class TestPidStep:
    def test_proportional(self):
        u, state = pid_step(2.0, PidState(), PidGains(kp=3.0), 0.1)
        assert u == pytest.approx(6.0)
        assert state.integral == pytest.approx(0.2)
        assert state.prev_error == 2.0

    def test_integral_term(self):
        u, _ = pid_step(2.0, PidState(), PidGains(kp=3.0, ki=1.0), 0.1)
        assert u == pytest.approx(6.2)

    def test_derivative_term(self):
        u, _ = pid_step(1.0, PidState(), PidGains(kp=1.0, kd=0.5), 0.1)
        assert u == pytest.approx(6.0)

    def test_integral_is_clamped(self):
        _, state = pid_step(100.0, PidState(), PidGains(kp=1.0, ki=1.0), 0.1, integral_limit=1.0)
        assert state.integral == 1.0
        _, state = pid_step(-100.0, PidState(), PidGains(kp=1.0, ki=1.0), 0.1, integral_limit=1.0)
        assert state.integral == -1.0

    def test_bad_dt(self):
        with pytest.raises(ConfigError):
            pid_step(1.0, PidState(), PidGains(kp=1.0), 0.0)


class TestPressureMapping:
    def test_antagonistic_split(self):
        np.testing.assert_allclose(map_to_pressures(50.0, 100.0, 500.0), [150.0, 50.0])

    def test_clamped(self):
        np.testing.assert_allclose(map_to_pressures(400.0, 100.0, 500.0), [500.0, 0.0])
        np.testing.assert_allclose(map_to_pressures(-400.0, 100.0, 500.0), [0.0, 500.0])

    def test_bias_range(self):
        with pytest.raises(ConfigError):
            map_to_pressures(0.0, 300.0, 500.0)


class TestGains:
    def test_kp_must_be_positive(self):
        with pytest.raises(ConfigError):
            PidGains(kp=0.0)
        with pytest.raises(ValidationError):
            PidSection(kp=0.0)

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            PidGains(kp=-1.0)
        with pytest.raises(ConfigError):
            PidGains(kp=1.0, kd=-0.1)

    def test_zn_table(self):
        gains = zn_classic_gains(10.0, 2.0)
        assert (gains.kp, gains.ki, gains.kd) == pytest.approx((6.0, 6.0, 1.5))

    def test_zn_linear_in_ultimate_gain(self):
        base = zn_classic_gains(10.0, 2.0)
        double = zn_classic_gains(20.0, 2.0)
        assert (double.kp, double.ki, double.kd) == pytest.approx((2 * base.kp, 2 * base.ki, 2 * base.kd))

    def test_section_round_trip(self):
        assert gains_from_section(PidSection()) is None
        cfg = section_with_gains(PidSection(), PidGains(2.0, 1.0, 0.5))
        assert gains_from_section(cfg) == PidGains(2.0, 1.0, 0.5)


class TestOscillationDetector:
    t = np.arange(400)

    def test_steady_sine(self):
        sustained, period = detect_sustained_oscillation(5.0 * np.sin(2 * np.pi * self.t / 20), 0.1)
        assert sustained
        assert period == pytest.approx(2.0)

    def test_decaying_sine(self):
        signal = 5.0 * np.sin(2 * np.pi * self.t / 20) * 0.7 ** (self.t / 20)
        assert detect_sustained_oscillation(signal, 0.1) == (False, 0.0)

    def test_flat_signal(self):
        assert detect_sustained_oscillation(np.full(400, 3.0), 0.1) == (False, 0.0)


class TestClosedLoop:
    def test_controller_reset(self):
        controller = PidController(PidGains(kp=2.0, ki=1.0), 500.0)
        controller.act(0.0, 10.0)
        assert controller.state != PidState()
        controller.reset()
        assert controller.state == PidState()

    def test_run_pid(self):
        targets = np.full(30, 10.0)
        obs, actions = run_pid(PlantConfig(), PidGains(kp=5.0), targets, seed=3)
        assert obs.shape == (30, 4) and actions.shape == (30, 2)
        assert np.all((actions >= 0.0) & (actions <= 500.0))
        again, _ = run_pid(PlantConfig(), PidGains(kp=5.0), targets, seed=3)
        np.testing.assert_array_equal(obs, again)

    def test_untunable_within_bound(self):
        cfg = PidSection(kp_start=0.05, kp_max=0.3)
        with pytest.raises(TuningError, match="under bound"):
            ziegler_nichols_tune(PlantConfig(), cfg, steps=100)

    def test_unstable_first_trial(self):
        with pytest.raises(TuningError, match="already unstable"):
            ziegler_nichols_tune(PlantConfig(), PidSection(kp_start=2.0), steps=100)

    def test_refinement_grid(self):
        trajectory = gen_random_walk((-25.0, 40.0), 3.0, 30, seed=2)
        best, grid = refine_gains(PlantConfig(), PidGains(5.0, 1.0, 0.5), trajectory)
        assert len(grid) == 27
        assert grid["mse"].is_monotonic_increasing
        assert best.kp == pytest.approx(grid.iloc[0]["kp"])
        assert set(grid["kp"].round(6)) == {3.5, 5.0, 6.5}


class TestUltimateGain:
    def test_limit_contact_at_stop(self):
        observations = np.zeros((5, 4))
        observations[:, 0] = [0.0, 10.0, 44.8, 45.0, 20.0]
        actions = np.full((5, 2), 100.0)
        assert limit_contact(observations, actions, PlantConfig()) == 2

    def test_limit_contact_on_saturation(self):
        observations = np.zeros((4, 4))
        actions = np.array([[100.0, 100.0], [180.0, 20.0], [200.0, 0.0], [100.0, 100.0]])
        assert limit_contact(observations, actions, PlantConfig()) == 2
        assert limit_contact(observations[:2], actions[:2], PlantConfig()) is None

    def test_peak_period(self):
        t = np.arange(100)
        assert peak_period(np.sin(2 * np.pi * t / 8), 0.1) == pytest.approx(0.8)
        assert peak_period(np.arange(10.0), 0.1) == 0.0

    def test_tuned_gains_settle_a_ten_degree_step(self):
        result = ziegler_nichols_tune(PlantConfig())
        assert 0.3 < result.ultimate_gain < 1.0
        assert 0.3 < result.ultimate_period_s < 1.2
        observations, actions = run_pid(PlantConfig().noiseless(), result.gains, np.full(100, 10.0), seed=0)
        angles = observations[:, 0]
        assert (angles.max() - 10.0) / 10.0 < 0.6
        np.testing.assert_array_less(np.abs(angles[50:] - 10.0), 1.0)
        assert limit_contact(observations, actions, PlantConfig()) is None

    def test_refined_gains_track_a_walk(self):
        gains = ziegler_nichols_tune(PlantConfig()).gains
        trajectory = gen_random_walk((-25.0, 40.0), 3.0, 200, seed=5)
        refined, grid = refine_gains(PlantConfig(), gains, trajectory)
        assert grid["mse"].iloc[0] < 50.0
        observations, actions = run_pid(PlantConfig().noiseless(), refined, trajectory.target_angles, seed=0)
        assert limit_contact(observations, actions, PlantConfig()) is None
