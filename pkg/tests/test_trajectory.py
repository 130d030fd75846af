import math

import numpy as np
import pytest

from errors import ConfigError, TrajectoryFormatError
from tracking.trajectory import (
    Trajectory, all_windows, eval_suite, gen_constant_velocity, gen_random_walk, gen_sinusoid, gen_stepwise,
    held_out_set, load_csv, save_csv, training_set, window,
)

RANGE = (-25.0, 40.0)


class TestGenerators:
    def test_random_walk_without_steps_is_constant(self):
        traj = gen_random_walk(RANGE, 0.0, 50, seed=1)
        np.testing.assert_array_equal(traj.target_angles, np.zeros(50))

    def test_random_walk_stays_in_range(self):
        assert gen_random_walk(RANGE, 3.0, 10_000, seed=2).in_range(RANGE)

    def test_random_walk_seeded(self):
        a = gen_random_walk(RANGE, 3.0, 100, seed=3)
        b = gen_random_walk(RANGE, 3.0, 100, seed=3)
        np.testing.assert_array_equal(a.angles, b.angles)

    def test_constant_velocity(self):
        traj = gen_constant_velocity(10.0, RANGE, 400)
        angles = traj.target_angles
        assert angles[1] - angles[0] == 1.0
        assert angles.max() == 40.0 and angles.min() == -25.0
        period = int(2 * (40 - -25) / (10.0 * 0.1))
        np.testing.assert_allclose(angles[40:40 + 200], angles[40 + period:40 + period + 200])

    def test_constant_velocity_needs_speed(self):
        with pytest.raises(ConfigError):
            gen_constant_velocity(0.0, RANGE, 10)

    def test_stepwise(self):
        angles = gen_stepwise(-5.0, 20, RANGE, 60).target_angles
        np.testing.assert_array_equal(angles[:20], 0.0)
        assert angles[20] == -5.0
        np.testing.assert_array_equal(gen_stepwise(0.0, 20, RANGE, 60).target_angles, 0.0)
        assert gen_stepwise(-5.0, 20, RANGE, 10_000).in_range(RANGE)

    def test_stepwise_velocity_at_jump(self):
        traj = gen_stepwise(-5.0, 20, RANGE, 60)
        assert traj.velocities[19, 0] == pytest.approx(-50.0)
        assert traj.velocities[20, 0] == 0.0
        assert traj.jump_steps == (19, 39)

    def test_sinusoid(self):
        traj = gen_sinusoid(20.0, 60, 7.5, 200, RANGE)
        assert traj.target_angles[0] == 7.5
        assert traj.target_angles[15] == pytest.approx(27.5)
        peak = np.abs(traj.velocities).max()
        assert peak == pytest.approx(2 * math.pi * 20.0 / (60 * 0.1), rel=0.05)

    def test_sinusoid_bounds(self):
        with pytest.raises(ConfigError):
            gen_sinusoid(30.0, 60, 20.0, 100, RANGE)


class TestWindow:
    traj = Trajectory.from_angles(np.array([0.0, 1.0, 3.0, 6.0]))

    def test_single_step(self):
        np.testing.assert_allclose(window(self.traj, 1, 1), [1.0, 20.0])

    def test_terminal_padding(self):
        w = window(self.traj, 3, 3)
        np.testing.assert_allclose(w, [6.0, 6.0, 6.0, 30.0, 0.0, 0.0])

    def test_interior_layout(self):
        w = window(self.traj, 1, 3)
        assert w.shape == (6,)
        np.testing.assert_allclose(w, [1.0, 3.0, 6.0, 20.0, 30.0, 30.0])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            window(self.traj, 4, 3)

    def test_all_windows_shift_by_one(self):
        windows = all_windows(self.traj, 2)
        assert windows.shape == (4, 4)
        assert windows[1][0] == windows[0][1]


class TestCsv:
    def test_round_trip(self, tmp_path):
        traj = gen_random_walk(RANGE, 3.0, 50, seed=4, name="walk")
        loaded = load_csv(save_csv(traj, tmp_path / "walk.csv"))
        assert loaded.name == "walk"
        np.testing.assert_allclose(loaded.angles, traj.angles, atol=1e-8)
        np.testing.assert_allclose(loaded.velocities, traj.velocities, atol=1e-8)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(TrajectoryFormatError):
            load_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("step,angle_deg,velocity_dps\n")
        with pytest.raises(TrajectoryFormatError, match="no data rows"):
            load_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,theta\n0,1\n")
        with pytest.raises(TrajectoryFormatError) as info:
            load_csv(path)
        assert info.value.line == 1

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("step,angle_deg,velocity_dps\n0,1.0,0.0\n1,abc,0.0\n")
        with pytest.raises(TrajectoryFormatError) as info:
            load_csv(path)
        assert info.value.line == 3
        assert "line 3" in str(info.value)


class TestSets:
    def test_eval_suite(self):
        suite = eval_suite(RANGE)
        assert len(suite) == 10
        assert len({t.name for t in suite}) == 10
        assert all(t.in_range(RANGE) and len(t) == 200 for t in suite)

    def test_eval_suite_is_fixed(self):
        for a, b in zip(eval_suite(RANGE), eval_suite(RANGE)):
            np.testing.assert_array_equal(a.angles, b.angles)

    def test_training_sets(self):
        first = training_set("experiment1", 5, 100, RANGE, 3.0, seed=0)
        second = training_set("experiment2", 5, 100, RANGE, 3.0, seed=0)
        assert len(first) == 5
        assert len(second) == 9
        assert all(t.in_range((0.0, 40.0)) for t in second[5:])
        with pytest.raises(ConfigError):
            training_set("experiment3", 5, 100, RANGE, 3.0, seed=0)

    def test_held_out_differs_from_training(self):
        held = held_out_set(RANGE, 3.0, 100)
        train = training_set("experiment1", 3, 100, RANGE, 3.0, seed=0)
        assert len(held) == 3
        assert not np.array_equal(held[0].angles, train[0].angles)


@pytest.mark.parametrize("traj", [
    *eval_suite(RANGE),
    *training_set("experiment2", 4, 120, RANGE, 3.0, seed=0),
    gen_stepwise(4.0, 20, RANGE, 300),
    gen_stepwise(-5.0, 7, (-10.0, 10.0), 300),
], ids=lambda t: t.name)
def test_velocity_matches_next_angle(traj):
    """v_t * dt == angle_{t+1} - angle_t on every step but the last, jumps included."""
    np.testing.assert_allclose(traj.velocities[:-1] * traj.dt, np.diff(traj.angles, axis=0), atol=1e-9)
