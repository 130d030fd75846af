import numpy as np
import pytest

from errors import ShapeError
from tracking.reward import RewardParams, mse, reward, reward_from_observation, velocity_sign_indicator


@pytest.mark.parametrize("v, target, expected", [(5, 5, 0.0), (5, -5, 1.0), (0, -5, 0.0)])
def test_velocity_sign_indicator(v, target, expected):
    assert velocity_sign_indicator(v, target) == expected


class TestReward:
    def test_perfect_tracking(self):
        assert reward([10.0], [10.0], [3.0], [3.0], [0.0, 0.0]) == 0.0

    def test_angle_error(self):
        assert reward([40.0], [0.0], [0.0], [0.0], [0.0, 0.0]) == pytest.approx(-1.0, abs=1e-9)

    def test_direction_penalty(self):
        assert reward([0.0], [0.0], [2.0], [-1.0], [0.0, 0.0]) == pytest.approx(-0.001, abs=1e-9)

    def test_pressure_penalty(self):
        assert reward([0.0], [0.0], [0.0], [0.0], [50000.0, 0.0]) == pytest.approx(-1.0, abs=1e-9)

    def test_custom_constants(self):
        params = RewardParams(alpha=20.0)
        assert reward([20.0], [0.0], [0.0], [0.0], [0.0, 0.0], params) == pytest.approx(-1.0, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            reward([0.0, 1.0], [0.0], [0.0], [0.0], [0.0, 0.0])

    def test_from_observation_uses_first_target(self):
        observation = np.array([12.0, -4.0, 100.0, 50.0])
        window = np.array([20.0, 99.0, 99.0, 5.0, -99.0, -99.0])
        expected = reward([12.0], [20.0], [-4.0], [5.0], [100.0, 50.0])
        assert reward_from_observation(observation, window, 1, 3) == pytest.approx(expected, abs=1e-12)


class TestMse:
    def test_identical(self):
        assert mse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_constant_offset(self):
        assert mse(np.arange(5.0) + 3.0, np.arange(5.0)) == pytest.approx(9.0)

    def test_small_example(self):
        assert mse([0.0, 2.0], [1.0, 1.0]) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ShapeError):
            mse([], [])
        with pytest.raises(ShapeError):
            mse([1.0], [1.0, 2.0])
