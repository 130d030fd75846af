"""
Recurrent state-space world model with a trajectory-conditioned reward head.

    h_t  = GRU(h_{t-1}, elu(W [z_{t-1}, a_{t-1}]))        recurrent_step
    z_t ~ q(z_t | h_t, x_t)                                represent (posterior)
    z_t ~ p(z_t | h_t)                                     transition_prior
    x_t ~ N(obs_head(h_t, z_t), 1)                         predict_observation
    r_t ~ N(reward_head(h_t, z_t, tau_{t-1}), 1)           predict_reward
    g_t ~ Bernoulli(discount_head(h_t, z_t))               predict_discount

z is G groups of C-way one-hot samples with straight-through gradients.
Observations, targets and actions are normalized before they enter a network
(angles /40, velocities /100, pressures /p_max); rewards are not.

All parameter names start with "wm/".
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from autodiff.distributions import (
    DistParams, bernoulli_logprob, categorical_mode_st, categorical_sample_st, gaussian_logprob,
    kl_categorical, kl_categorical_groups,
)
from autodiff.layers import MLP, Dense, GRUCell
from autodiff.tensor import (
    Tensor, TensorLike, concat, grad_dict, lift, maximum, mean, sigmoid, square, stop_gradient, tsum,
)
from config import ModelSection
from errors import NonFiniteError, ShapeError
from plant.simulator import N_JOINTS, N_MUSCLES

logger = logging.getLogger(__name__)

ANGLE_SCALE = 40.0
VELOCITY_SCALE = 100.0


# -- normalization -------------------------------------------------------------


def observation_scale(p_max: float, n_joints: int = N_JOINTS, n_muscles: int = N_MUSCLES) -> np.ndarray:
    return np.array([ANGLE_SCALE] * n_joints + [VELOCITY_SCALE] * n_joints + [p_max] * n_muscles)


def window_scale(window_steps: int, n_joints: int = N_JOINTS) -> np.ndarray:
    return np.array([ANGLE_SCALE] * (window_steps * n_joints) + [VELOCITY_SCALE] * (window_steps * n_joints))


def normalize_observation(obs, p_max: float) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    return obs / observation_scale(p_max, n_muscles=obs.shape[-1] - 2 * N_JOINTS)


def denormalize_observation(obs, p_max: float) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    return obs * observation_scale(p_max, n_muscles=obs.shape[-1] - 2 * N_JOINTS)


def normalize_window(window, window_steps: int) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    return window / window_scale(window_steps, n_joints=window.shape[-1] // (2 * window_steps))


# -- data types ----------------------------------------------------------------


@dataclass(frozen=True)
class LatentState:
    """Deterministic state h (..., H) and flattened one-hot stochastic state z (..., G*C)."""

    h: Tensor
    z: Tensor

    def detach(self) -> "LatentState":
        return LatentState(stop_gradient(self.h), stop_gradient(self.z))

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.h.numpy(), self.z.numpy()


@dataclass(frozen=True)
class SequenceBatch:
    """
    B x L slices of replayed episodes. Index t holds the observation x_t, the
    action a_{t-1} that produced it, the reward r_t, the target window the actor
    used when choosing a_{t-1}, and the episode-end flag.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    targets: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        b, l = self.rewards.shape
        for name in ("observations", "actions", "targets"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[:2] != (b, l):
                raise ShapeError(f"batch {name} has shape {arr.shape}, expected ({b}, {l}, ...)")
        if self.ends.shape != (b, l):
            raise ShapeError(f"batch ends has shape {self.ends.shape}, expected ({b}, {l})")

    @property
    def batch_size(self) -> int:
        return self.rewards.shape[0]

    @property
    def length(self) -> int:
        return self.rewards.shape[1]


@dataclass(frozen=True)
class ImaginedBatch:
    """
    A dreamed rollout of `horizon` steps from N start states. hs/zs/windows have
    horizon + 1 entries (the start included); actions, entropies, rewards and
    discounts have `horizon`. rewards[k] and discounts[k] belong to the
    transition out of step k.
    """

    hs: list[Tensor]
    zs: list[Tensor]
    windows: np.ndarray
    actions: list[Tensor]
    entropies: list[Tensor]
    rewards: list[Tensor]
    discounts: list[Tensor]

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def state(self, k: int) -> LatentState:
        return LatentState(self.hs[k], self.zs[k])


@dataclass(frozen=True)
class WorldModelLoss:
    loss: float
    grads: dict[str, np.ndarray]
    metrics: dict[str, float]
    posterior_h: np.ndarray = field(repr=False)
    posterior_z: np.ndarray = field(repr=False)


# -- model ---------------------------------------------------------------------


class WorldModel:
    def __init__(self, cfg: ModelSection, p_max: float, n_joints: int = N_JOINTS, n_muscles: int = N_MUSCLES):
        self.cfg = cfg
        self.p_max = p_max
        self.n_joints = n_joints
        self.obs_dim = 2 * n_joints + n_muscles
        self.action_dim = n_muscles
        self.window_steps = cfg.window_steps
        self.window_dim = 2 * cfg.window_steps * n_joints
        self.deter = cfg.deter_size
        self.groups = cfg.groups
        self.classes = cfg.classes
        self.stoch = cfg.groups * cfg.classes
        self.dtype = np.float64 if cfg.precision == 64 else np.float32

        units, layers = cfg.units, cfg.layers
        self.img_in = Dense("wm/img_in", self.stoch + self.action_dim, units, "elu")
        self.gru = GRUCell("wm/gru", units, self.deter)
        self.posterior_net = MLP("wm/posterior", self.deter + self.obs_dim, units, layers, self.stoch)
        self.prior_net = MLP("wm/prior", self.deter, units, layers, self.stoch)
        self.obs_head = MLP("wm/obs", self.deter + self.stoch, units, layers, self.obs_dim)
        self.reward_head = MLP("wm/reward", self.deter + self.stoch + self.window_dim, units, layers, 1)
        self.discount_head = MLP("wm/discount", self.deter + self.stoch, units, layers, 1)

    @property
    def modules(self):
        return [self.img_in, self.gru, self.posterior_net, self.prior_net,
                self.obs_head, self.reward_head, self.discount_head]

    def init(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = {}
        for module in self.modules:
            params.update(module.init(rng, self.dtype))
        return params

    def shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for module in self.modules:
            shapes.update(module.shapes())
        return shapes

    def const(self, value) -> Tensor:
        return Tensor(np.asarray(value), dtype=self.dtype)

    def initial_state(self, batch: int) -> LatentState:
        return LatentState(self.const(np.zeros((batch, self.deter))), self.const(np.zeros((batch, self.stoch))))

    def _check(self, t: Tensor, dim: int, what: str) -> None:
        if t.shape[-1] != dim:
            raise ShapeError(f"{what} has last dimension {t.shape[-1]}, expected {dim}")

    # -- components ------------------------------------------------------------

    def recurrent_step(self, params, h: TensorLike, z: TensorLike, action_kpa: TensorLike) -> Tensor:
        h, z, a = (x if isinstance(x, Tensor) else self.const(x) for x in (h, z, action_kpa))
        self._check(h, self.deter, "h")
        self._check(z, self.stoch, "z")
        self._check(a, self.action_dim, "action")
        x = self.img_in(params, concat([z, a * (1.0 / self.p_max)], axis=-1))
        return self.gru(params, h, x)

    def represent(self, params, h: Tensor, obs_norm: TensorLike) -> DistParams:
        obs_norm = obs_norm if isinstance(obs_norm, Tensor) else self.const(obs_norm)
        self._check(h, self.deter, "h")
        self._check(obs_norm, self.obs_dim, "observation")
        logits = self.posterior_net(params, concat([h, obs_norm], axis=-1))
        return DistParams.categorical(logits, self.groups, self.classes)

    def transition_prior(self, params, h: Tensor) -> DistParams:
        self._check(h, self.deter, "h")
        return DistParams.categorical(self.prior_net(params, h), self.groups, self.classes)

    def predict_observation(self, params, h: Tensor, z: Tensor) -> Tensor:
        """Mean of the normalized observation."""
        return self.obs_head(params, concat([h, z], axis=-1))

    def _reward_mean(self, params, h: Tensor, z: Tensor, window_norm: TensorLike) -> Tensor:
        window_norm = window_norm if isinstance(window_norm, Tensor) else self.const(window_norm)
        self._check(window_norm, self.window_dim, "target window")
        return self.reward_head(params, concat([h, z, window_norm], axis=-1))

    def predict_reward(self, params, h: Tensor, z: Tensor, window_norm: TensorLike) -> Tensor:
        return self._reward_mean(params, h, z, window_norm)[..., 0]

    def _discount_logits(self, params, h: Tensor, z: Tensor) -> Tensor:
        return self.discount_head(params, concat([h, z], axis=-1))

    def predict_discount(self, params, h: Tensor, z: Tensor) -> Tensor:
        return sigmoid(self._discount_logits(params, h, z))[..., 0]

    def sample_z(self, dist: DistParams, rng: np.random.Generator | None) -> Tensor:
        """Straight-through one-hot sample (mode when rng is None), flattened to G*C."""
        z = categorical_mode_st(dist) if rng is None else categorical_sample_st(dist, rng)[0]
        return z.reshape(z.shape[:-2] + (self.stoch,))

    def posterior_step(self, params, state: LatentState, action_kpa: TensorLike, obs_kpa,
                       rng: np.random.Generator | None) -> LatentState:
        """Advance h with the previous action, then condition z on the live observation."""
        h = self.recurrent_step(params, state.h, state.z, action_kpa)
        post = self.represent(params, h, normalize_observation(obs_kpa, self.p_max))
        return LatentState(h, self.sample_z(post, rng))

    def imagine_step(self, params, state: LatentState, action_kpa: TensorLike,
                     rng: np.random.Generator | None) -> LatentState:
        h = self.recurrent_step(params, state.h, state.z, action_kpa)
        return LatentState(h, self.sample_z(self.transition_prior(params, h), rng))

    # -- training --------------------------------------------------------------

    def loss_graph(self, params, batch: SequenceBatch, rng: np.random.Generator):
        """Loss tensor, metric tensors and the posterior states along the batch."""
        b, l = batch.batch_size, batch.length
        cfg = self.cfg
        obs = normalize_observation(batch.observations, self.p_max)
        targets = normalize_window(batch.targets, self.window_steps)
        discount_target = cfg.discount * (1.0 - batch.ends.astype(np.float64))

        state = self.initial_state(b)
        obs_lp, obs_sq, reward_lp, discount_lp, kl_loss, kl_raw = [], [], [], [], [], []
        hs, zs = [], []
        for t in range(l):
            h = self.recurrent_step(params, state.h, state.z, batch.actions[:, t])
            post = self.represent(params, h, obs[:, t])
            prior = self.transition_prior(params, h)
            z = self.sample_z(post, rng)
            state = LatentState(h, z)
            hs.append(h.numpy())
            zs.append(z.numpy())

            obs_mean = self.predict_observation(params, h, z)
            obs_lp.append(gaussian_logprob(self.const(obs[:, t]), obs_mean))
            obs_sq.append(mean(square(obs_mean - self.const(obs[:, t])), axis=-1))
            reward_lp.append(gaussian_logprob(self.const(batch.rewards[:, t:t + 1]),
                                              self._reward_mean(params, h, z, targets[:, t])))
            discount_lp.append(bernoulli_logprob(self.const(discount_target[:, t:t + 1]),
                                                 self._discount_logits(params, h, z))[..., 0])

            post_sg = DistParams.categorical(stop_gradient(post.logits), self.groups, self.classes)
            prior_sg = DistParams.categorical(stop_gradient(prior.logits), self.groups, self.classes)
            trains_prior = tsum(maximum(kl_categorical_groups(post_sg, prior), cfg.free_nats), axis=-1)
            trains_post = tsum(maximum(kl_categorical_groups(post, prior_sg), cfg.free_nats), axis=-1)
            kl_loss.append(trains_prior * cfg.kl_balance + trains_post * (1.0 - cfg.kl_balance))
            kl_raw.append(kl_categorical(post_sg, prior_sg))

        def avg(terms: list[Tensor]) -> Tensor:
            return mean(concat([t.reshape((b, 1)) for t in terms], axis=-1))

        obs_term, reward_term, discount_term = -avg(obs_lp), -avg(reward_lp), -avg(discount_lp)
        kl_term = avg(kl_loss)
        loss = obs_term + reward_term + discount_term + kl_term * cfg.kl_scale
        metrics = {
            "wm_loss": loss,
            "obs_nll": obs_term,
            "obs_mse": avg(obs_sq),
            "reward_nll": reward_term,
            "discount_nll": discount_term,
            "kl_loss": kl_term,
            "kl": avg(kl_raw),
        }
        return loss, metrics, np.stack(hs, axis=1), np.stack(zs, axis=1)

    def wm_loss(self, params: dict[str, np.ndarray], batch: SequenceBatch,
                rng: np.random.Generator) -> WorldModelLoss:
        lifted = lift(params)
        loss, metric_tensors, hs, zs = self.loss_graph(lifted, batch, rng)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteError(f"world-model loss is {value}")
        grads = grad_dict(loss, lifted)
        metrics = {name: t.item() for name, t in metric_tensors.items()}
        return WorldModelLoss(value, grads, metrics, hs, zs)

    def observe(self, params, observations: np.ndarray, actions: np.ndarray,
                rng: np.random.Generator | None) -> list[LatentState]:
        """Posterior states along (B, L) observation/action sequences."""
        state = self.initial_state(observations.shape[0])
        states = []
        for t in range(observations.shape[1]):
            state = self.posterior_step(params, state, actions[:, t], observations[:, t], rng)
            states.append(state)
        return states

    # -- imagination -------------------------------------------------------------

    def dream(self, params, policy, actor_params, starts: LatentState, windows: np.ndarray,
              rng: np.random.Generator) -> ImaginedBatch:
        """
        Roll the prior forward under the actor for windows.shape[1] - 1 steps.
        `windows` is (N, horizon + 1, 2*l*n): the target window of each start
        advancing one step per imagined step.
        """
        n, steps, _ = windows.shape
        horizon = steps - 1
        if horizon < 1:
            raise ShapeError("dream needs a horizon of at least 1")
        if starts.h.shape[0] != n:
            raise ShapeError(f"{starts.h.shape[0]} start states for {n} window streams")
        windows_norm = normalize_window(windows, self.window_steps)

        state = starts
        hs, zs = [state.h], [state.z]
        actions, entropies, rewards, discounts = [], [], [], []
        for k in range(horizon):
            action, dist = policy.act(actor_params, state, windows[:, k], "sample", rng)
            state = self.imagine_step(params, state, action, rng)
            actions.append(action)
            entropies.append(dist.entropy())
            rewards.append(self.predict_reward(params, state.h, state.z, windows_norm[:, k]))
            discounts.append(self.predict_discount(params, state.h, state.z))
            hs.append(state.h)
            zs.append(state.z)
        return ImaginedBatch(hs, zs, windows, actions, entropies, rewards, discounts)

    def open_loop_rollout(self, params, policy, actor_params, first_obs, windows: np.ndarray,
                          rng: np.random.Generator | None = None) -> np.ndarray:
        """
        Predicted angles (T,) after each of T actions. The posterior sees only
        the first observation; afterwards states come from the prior alone and
        the actor acts on those imagined states.
        """
        state = self.posterior_step(params, self.initial_state(1), np.zeros((1, self.action_dim)),
                                    np.asarray(first_obs, dtype=np.float64)[None], rng)
        angles = []
        for t in range(len(windows)):
            action, _ = policy.act(actor_params, state, windows[t][None], "mean", None)
            state = self.imagine_step(params, state, action, rng)
            predicted = denormalize_observation(self.predict_observation(params, state.h, state.z).numpy(), self.p_max)
            angles.append(float(predicted[0, 0]))
        return np.array(angles)
