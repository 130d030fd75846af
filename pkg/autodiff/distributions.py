"""
Distributions used by the world model and the policy.

Categorical latents come in groups x classes with straight-through samples;
observation and reward predictors are unit-variance Gaussians; the discount
predictor is a Bernoulli over a logit.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from autodiff.tensor import (
    Tensor, TensorLike, as_tensor, log_softmax, softmax, softplus, square, straight_through, tsum,
)
from errors import NonFiniteError, ShapeError

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DistParams:
    kind: Literal["categorical-groups", "diagonal-gaussian", "bernoulli"]
    params: tuple[Tensor, ...]

    @classmethod
    def categorical(cls, logits: Tensor, groups: int, classes: int) -> "DistParams":
        if logits.shape[-1] != groups * classes and logits.shape[-2:] != (groups, classes):
            raise ShapeError(f"categorical logits {logits.shape} are not {groups}x{classes}")
        if logits.shape[-2:] != (groups, classes):
            logits = logits.reshape(logits.shape[:-1] + (groups, classes))
        return cls("categorical-groups", (logits,))

    @classmethod
    def gaussian(cls, mean: Tensor, log_std: Tensor) -> "DistParams":
        if not np.isfinite(log_std.data).all():
            raise NonFiniteError("log-std is not finite")
        return cls("diagonal-gaussian", (mean, log_std))

    @classmethod
    def bernoulli(cls, logits: Tensor) -> "DistParams":
        return cls("bernoulli", (logits,))

    @property
    def logits(self) -> Tensor:
        return self.params[0]

    @property
    def groups(self) -> int:
        return self.logits.shape[-2]

    @property
    def classes(self) -> int:
        return self.logits.shape[-1]

    def probs(self) -> Tensor:
        return softmax(self.logits, axis=-1)


def categorical_sample_st(dist: DistParams, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """
    One-hot sample per group. The returned sample carries the gradient of the
    softmax probabilities (straight-through); the probabilities are returned too.
    """
    probs = dist.probs()
    p = probs.data.astype(np.float64)
    u = rng.random(p.shape[:-1] + (1,))
    index = np.minimum((np.cumsum(p, axis=-1) < u).sum(axis=-1), p.shape[-1] - 1)
    onehot = np.eye(p.shape[-1])[index]
    return straight_through(onehot, probs), probs


def categorical_mode_st(dist: DistParams) -> Tensor:
    probs = dist.probs()
    onehot = np.eye(probs.shape[-1])[probs.data.argmax(axis=-1)]
    return straight_through(onehot, probs)


def kl_categorical_groups(p: DistParams, q: DistParams) -> Tensor:
    """KL(p || q) per group, shape (..., groups)."""
    if p.logits.shape != q.logits.shape:
        raise ShapeError(f"kl: shapes differ {p.logits.shape} vs {q.logits.shape}")
    log_p = log_softmax(p.logits)
    log_q = log_softmax(q.logits)
    return tsum(p.probs() * (log_p - log_q), axis=-1)


def kl_categorical(p: DistParams, q: DistParams) -> Tensor:
    """KL(p || q) summed over groups."""
    return tsum(kl_categorical_groups(p, q), axis=-1)


def gaussian_logprob(x: TensorLike, mean: Tensor) -> Tensor:
    """Unit-std diagonal Gaussian log-density summed over the last axis."""
    x = as_tensor(x, like=mean)
    if x.shape != mean.shape:
        raise ShapeError(f"gaussian_logprob: {x.shape} vs {mean.shape}")
    return tsum(square(x - mean) * -0.5 - HALF_LOG_2PI, axis=-1)


def bernoulli_logprob(target: TensorLike, logits: Tensor) -> Tensor:
    """log p(target) for p = sigmoid(logits); targets may be soft, in [0, 1]."""
    target = as_tensor(target, like=logits)
    if target.shape != logits.shape:
        raise ShapeError(f"bernoulli_logprob: {target.shape} vs {logits.shape}")
    return -(target * softplus(-logits) + (1.0 - target) * softplus(logits))
