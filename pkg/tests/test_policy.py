import numpy as np
import pytest

from agent.policy import Policy, lambda_returns, target_for_reward_alignment
from agent.world_model import ImaginedBatch, LatentState
from autodiff.optim import AdamState, adam_update
from autodiff.tensor import Tensor, lift
from config import PolicySection
from errors import ConfigError, ShapeError
from tracking.trajectory import gen_sinusoid, window

P_MAX = 500.0


def t64(x):
    return Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


def random_state(rng, n: int, deter: int = 8, groups: int = 2, classes: int = 3) -> LatentState:
    picks = rng.integers(classes, size=(n, groups))
    z = np.eye(classes)[picks].reshape(n, groups * classes)
    return LatentState(t64(rng.normal(size=(n, deter))), t64(z))


class TestLambdaReturns:
    rewards = np.array([1.0, 1.0])
    values = np.array([0.0, 0.5, 2.0])
    discounts = np.array([0.9, 0.9])

    def test_hand_example(self):
        returns = lambda_returns(self.rewards, self.values, self.discounts, 0.5)
        np.testing.assert_allclose(returns, [2.485, 2.8])

    def test_zero_lambda_is_one_step_td(self):
        returns = lambda_returns(self.rewards, self.values, self.discounts, 0.0)
        np.testing.assert_allclose(returns, self.rewards + self.discounts * self.values[1:])

    def test_unit_lambda_is_discounted_sum(self):
        returns = lambda_returns(self.rewards, self.values, self.discounts, 1.0)
        np.testing.assert_allclose(returns, [1 + 0.9 * (1 + 0.9 * 2.0), 1 + 0.9 * 2.0])

    def test_tensors(self):
        returns = lambda_returns([t64(1.0), t64(1.0)], [t64(0.0), t64(0.5), t64(2.0)], [t64(0.9), t64(0.9)], 0.5)
        assert returns[0].item() == pytest.approx(2.485)

    def test_errors(self):
        with pytest.raises(ShapeError):
            lambda_returns(self.rewards, self.values[:2], self.discounts, 0.5)
        with pytest.raises(ConfigError):
            lambda_returns(self.rewards, self.values, self.discounts, 1.5)


@pytest.fixture
def policy(tiny_model_cfg):
    return Policy(tiny_model_cfg, PolicySection(), P_MAX)


class TestActor:
    def test_actions_within_pressure_range(self, policy, rng):
        actor, _ = policy.init(0)
        params = {k: v * 20.0 for k, v in actor.items()}
        state = random_state(rng, 64)
        windows = rng.uniform(-300, 300, size=(64, 6))
        for mode in ("mean", "sample"):
            action, _ = policy.act(lift(params), state, windows, mode, rng)
            assert action.shape == (64, 2)
            assert np.all((action.numpy() >= 0.0) & (action.numpy() <= P_MAX))

    def test_mean_mode_is_deterministic(self, policy, rng):
        actor, _ = policy.init(0)
        state = random_state(rng, 4)
        windows = rng.uniform(-20, 20, size=(4, 6))
        a, _ = policy.act(lift(actor), state, windows, "mean")
        b, _ = policy.act(lift(actor), state, windows, "mean")
        np.testing.assert_array_equal(a.numpy(), b.numpy())

    def test_sampling_is_seeded(self, policy, rng):
        actor, _ = policy.init(0)
        state = random_state(rng, 4)
        windows = rng.uniform(-20, 20, size=(4, 6))
        a, _ = policy.act(lift(actor), state, windows, "sample", np.random.default_rng(3))
        b, _ = policy.act(lift(actor), state, windows, "sample", np.random.default_rng(3))
        np.testing.assert_array_equal(a.numpy(), b.numpy())

    def test_bad_modes(self, policy, rng):
        actor, _ = policy.init(0)
        state = random_state(rng, 1)
        with pytest.raises(ConfigError):
            policy.act(lift(actor), state, np.zeros((1, 6)), "sample", None)
        with pytest.raises(ConfigError):
            policy.act(lift(actor), state, np.zeros((1, 6)), "greedy", rng)

    def test_window_length_checked(self, policy, rng):
        actor, _ = policy.init(0)
        with pytest.raises(ShapeError):
            policy.act(lift(actor), random_state(rng, 1), np.zeros((1, 4)), "mean")

    def test_log_std_bounded(self, policy, rng):
        actor, _ = policy.init(0)
        params = {k: v * 50.0 for k, v in actor.items()}
        dist = policy.action_dist(lift(params), random_state(rng, 32), rng.uniform(-40, 40, size=(32, 6)))
        log_std = dist.log_std.numpy()
        assert np.all((log_std >= -5.0) & (log_std <= 1.0))


def constant_batch(policy: Policy, state: LatentState, windows: np.ndarray, horizon: int, reward: float,
                   discount: float, entropy=None) -> ImaginedBatch:
    n = windows.shape[0]
    full = np.repeat(windows[:, None], horizon + 1, axis=1)
    zeros = t64(np.zeros(n))
    return ImaginedBatch(
        hs=[state.h] * (horizon + 1),
        zs=[state.z] * (horizon + 1),
        windows=full,
        actions=[t64(np.zeros((n, 2)))] * horizon,
        entropies=[entropy if entropy is not None else zeros] * horizon,
        rewards=[t64(np.full(n, reward))] * horizon,
        discounts=[t64(np.full(n, discount))] * horizon,
    )


class TestActorCritic:
    def test_critic_converges_to_discounted_value(self, tiny_model_cfg, rng):
        policy = Policy(tiny_model_cfg, PolicySection(horizon=5), P_MAX)
        _, critic = policy.init(0)
        state = random_state(rng, 1)
        imagined = constant_batch(policy, state, np.zeros((1, 6)), horizon=5, reward=1.0, discount=0.8)
        adam = AdamState.zeros_like(critic)
        for _ in range(1500):
            result = policy.actor_critic_update(imagined, {}, critic)
            critic, adam = adam_update(critic, result.critic_grads, adam, lr=1e-2)
        value = policy.critic_value(lift(critic), state, np.zeros((1, 6))).item()
        assert value == pytest.approx(1.0 / (1.0 - 0.8), rel=0.05)

    @pytest.mark.parametrize("coeff", [0.0, 10.0])
    def test_entropy_bonus_widens_the_actor(self, tiny_model_cfg, rng, coeff):
        policy = Policy(tiny_model_cfg, PolicySection(horizon=2, entropy_coeff=coeff), P_MAX)
        actor, critic = policy.init(0)
        state = random_state(rng, 4)
        windows = rng.uniform(-20, 20, size=(4, 6))

        def mean_log_std(params):
            return float(policy.action_dist(lift(params), state, windows).log_std.numpy().mean())

        before = mean_log_std(actor)
        adam = AdamState.zeros_like(actor)
        for _ in range(50):
            lifted = lift(actor)
            entropy = policy.action_dist(lifted, state, windows).entropy()
            imagined = constant_batch(policy, state, windows, horizon=2, reward=-1.0, discount=0.9, entropy=entropy)
            result = policy.actor_critic_update(imagined, lifted, critic)
            actor, adam = adam_update(actor, result.actor_grads, adam, lr=1e-2)
        after = mean_log_std(actor)
        if coeff == 0.0:
            assert after == pytest.approx(before)
        else:
            assert after > before + 0.1

    def test_metrics(self, policy, rng):
        actor, critic = policy.init(0)
        state = random_state(rng, 2)
        imagined = constant_batch(policy, state, np.zeros((2, 6)), horizon=3, reward=-0.5, discount=0.9)
        result = policy.actor_critic_update(imagined, lift(actor), critic)
        assert {"actor_loss", "critic_loss", "entropy", "value"} <= set(result.metrics)
        assert result.metrics["imagined_reward"] == pytest.approx(-0.5)
        assert set(result.critic_grads) == set(critic)


class TestRewardAlignment:
    traj = gen_sinusoid(20.0, 10, 5.0, 12)

    def test_first_step_is_plain_window(self):
        np.testing.assert_array_equal(target_for_reward_alignment(self.traj, 0, 3), window(self.traj, 0, 3))

    def test_consecutive_steps_shift_by_one(self):
        now = target_for_reward_alignment(self.traj, 4, 3)
        later = target_for_reward_alignment(self.traj, 5, 3)
        np.testing.assert_array_equal(later[:2], now[1:3])
        np.testing.assert_array_equal(later[3:5], now[4:6])

    def test_terminal_step_is_padded(self):
        last = target_for_reward_alignment(self.traj, len(self.traj) - 1, 3)
        np.testing.assert_array_equal(last[:3], np.full(3, self.traj.angles[-1, 0]))
        np.testing.assert_array_equal(last[4:], 0.0)
