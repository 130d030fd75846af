"""
Trajectory-conditioned actor and critic trained inside the world model.

Both networks read the same input, built by `policy_input`: the stochastic
latent z (plus h when `actor_uses_h` is set) and the normalized target window.
The actor outputs a Gaussian over pre-squash actions; actions are
(tanh(u) + 1) / 2 * p_max, so every emitted pressure lies in [0, p_max].
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from agent.world_model import ImaginedBatch, LatentState, normalize_window
from autodiff.layers import MLP
from autodiff.tensor import Tensor, concat, exp, grad_dict, lift, mean, stack, stop_gradient, tanh, tsum
from config import ModelSection, PolicySection
from errors import ConfigError, NonFiniteError, ShapeError
from tracking.trajectory import Trajectory, window

logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class ActionDist:
    mean: Tensor
    log_std: Tensor

    def entropy(self) -> Tensor:
        """Entropy of the pre-squash Gaussian, summed over action dimensions."""
        return tsum(self.log_std + HALF_LOG_2PI_E, axis=-1)


@dataclass(frozen=True)
class ActorCriticResult:
    actor_grads: dict[str, np.ndarray]
    critic_grads: dict[str, np.ndarray]
    metrics: dict[str, float]


def target_for_reward_alignment(trajectory: Trajectory, t: int, window_steps: int) -> np.ndarray:
    """
    The window the actor sees at step t. The same window conditions the reward
    head for the reward observed after that action.
    """
    return window(trajectory, t, window_steps)


def lambda_returns(rewards, values, discounts, lam: float):
    """
    V_t = r_t + g_t ((1 - lam) v_{t+1} + lam V_{t+1}),  V_H = v_H.

    Works on numpy arrays (leading axis is time) and on lists of Tensors.
    """
    horizon = len(rewards)
    if len(values) != horizon + 1 or len(discounts) != horizon:
        raise ShapeError(f"lambda_returns: {horizon} rewards need {horizon + 1} values and "
                         f"{horizon} discounts, got {len(values)} and {len(discounts)}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")

    targets = [None] * horizon
    nxt = values[horizon]
    for t in reversed(range(horizon)):
        mix = values[t + 1] if lam == 0.0 else (1.0 - lam) * values[t + 1] + lam * nxt
        nxt = rewards[t] + discounts[t] * mix
        targets[t] = nxt
    if isinstance(rewards, np.ndarray):
        return np.stack(targets)
    return targets


class Policy:
    def __init__(self, model_cfg: ModelSection, cfg: PolicySection, p_max: float, action_dim: int = 2,
                 n_joints: int = 1):
        self.cfg = cfg
        self.p_max = p_max
        self.action_dim = action_dim
        self.window_steps = model_cfg.window_steps
        self.window_dim = 2 * model_cfg.window_steps * n_joints
        self.stoch = model_cfg.groups * model_cfg.classes
        self.deter = model_cfg.deter_size
        self.dtype = np.float64 if model_cfg.precision == 64 else np.float32
        in_dim = self.stoch + self.window_dim + (self.deter if cfg.actor_uses_h else 0)
        self.actor_net = MLP("actor/net", in_dim, model_cfg.units, model_cfg.layers, 2 * action_dim)
        self.critic_net = MLP("critic/net", in_dim, model_cfg.units, model_cfg.layers, 1)

    def init(self, seed: int) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        rng = np.random.default_rng(seed)
        return self.actor_net.init(rng, self.dtype), self.critic_net.init(rng, self.dtype)

    def policy_input(self, state: LatentState, window_kpa) -> Tensor:
        """Shared actor/critic input: [h,] z and the normalized target window."""
        if isinstance(window_kpa, Tensor):
            window_kpa = window_kpa.numpy()
        window_norm = Tensor(normalize_window(window_kpa, self.window_steps), dtype=self.dtype)
        if window_norm.shape[-1] != self.window_dim:
            raise ShapeError(f"target window has length {window_norm.shape[-1]}, expected {self.window_dim}")
        parts = [state.h] if self.cfg.actor_uses_h else []
        return concat([*parts, state.z, window_norm], axis=-1)

    def action_dist(self, params, state: LatentState, window_kpa) -> ActionDist:
        out = self.actor_net(params, self.policy_input(state, window_kpa))
        mu = out[..., :self.action_dim]
        raw_std = out[..., self.action_dim:]
        # soft clamp into (LOG_STD_MIN, LOG_STD_MAX)
        half_range = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
        log_std = tanh(raw_std) * half_range + (LOG_STD_MIN + half_range)
        return ActionDist(mu, log_std)

    def squash(self, u: Tensor) -> Tensor:
        return (tanh(u) + 1.0) * (0.5 * self.p_max)

    def act(self, params, state: LatentState, window_kpa, mode: str = "sample",
            rng: np.random.Generator | None = None) -> tuple[Tensor, ActionDist]:
        """Pressures in kPa for each muscle; "mean" squashes the mean, "sample" draws a reparameterized sample."""
        dist = self.action_dist(params, state, window_kpa)
        if mode == "mean":
            return self.squash(dist.mean), dist
        if mode != "sample":
            raise ConfigError(f"unknown action mode '{mode}'")
        if rng is None:
            raise ConfigError("sampling actions needs an rng")
        noise = rng.standard_normal(dist.mean.shape)
        u = dist.mean + exp(dist.log_std) * Tensor(noise, dtype=self.dtype)
        return self.squash(u), dist

    def critic_value(self, params, state: LatentState, window_kpa) -> Tensor:
        return self.critic_net(params, self.policy_input(state, window_kpa))[..., 0]

    def actor_critic_update(self, imagined: ImaginedBatch, actor_params: dict[str, Tensor],
                            critic_params: dict[str, np.ndarray]) -> ActorCriticResult:
        """
        Critic regresses the stop-gradient lambda-returns; the actor maximizes
        them through the learned dynamics, plus an entropy bonus. `actor_params`
        are the lifted tensors the imagined batch was generated with.
        """
        horizon = imagined.horizon
        lam = self.cfg.lambda_

        critic_lifted = lift(critic_params)
        values = [self.critic_value(critic_lifted, imagined.state(k), imagined.windows[:, k])
                  for k in range(horizon + 1)]
        returns = lambda_returns(imagined.rewards, values, imagined.discounts, lam)

        # cumulative discount weights, no gradient
        disc = np.stack([d.numpy() for d in imagined.discounts])
        weights = np.concatenate([np.ones_like(disc[:1]), np.cumprod(disc, axis=0)[:-1]], axis=0)
        weights_t = Tensor(weights, dtype=self.dtype)

        ret = stack(returns)
        entropy = stack(imagined.entropies)
        actor_loss = -mean(weights_t * ret) - mean(entropy) * self.cfg.entropy_coeff
        actor_grads = grad_dict(actor_loss, actor_params)

        detached = [self.critic_value(critic_lifted, imagined.state(k).detach(), imagined.windows[:, k])
                    for k in range(horizon)]
        targets = stop_gradient(ret)
        diff = stack(detached) - targets
        critic_loss = mean(weights_t * diff * diff) * 0.5
        critic_grads = grad_dict(critic_loss, critic_lifted)

        for name, value in (("actor", actor_loss), ("critic", critic_loss)):
            if not np.isfinite(value.item()):
                raise NonFiniteError(f"{name} loss is {value.item()}")
        metrics = {
            "actor_loss": actor_loss.item(),
            "critic_loss": critic_loss.item(),
            "entropy": mean(entropy).item(),
            "imagined_reward": float(np.mean([r.numpy().mean() for r in imagined.rewards])),
            "value": float(np.mean(ret.numpy())),
            "log_std": mean(entropy).item() / self.action_dim - HALF_LOG_2PI_E,
        }
        return ActorCriticResult(actor_grads, critic_grads, metrics)
