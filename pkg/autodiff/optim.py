"""
Adam over flat parameter dicts, with global-norm gradient clipping.

Parameters, moments and the state object are never mutated: each update
returns new arrays, so a published parameter dict stays valid while the
learner keeps training.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            **hyper,
        )


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    clip_norm: float | None = 100.0,
    nonfinite: Literal["raise", "skip"] = "raise",
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step. Non-finite gradients raise, or skip the step."""
    if set(params) != set(grads):
        raise ShapeError(f"adam: parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"adam: gradient for {name} has shape {g.shape}, expected {params[name].shape}")

    norm = global_norm(grads)
    if not np.isfinite(norm):
        if nonfinite == "skip":
            logger.warning("Skipping Adam step %d: non-finite gradient", state.step + 1)
            return params, state
        raise NonFiniteError(f"non-finite gradient at Adam step {state.step + 1}")
    scale = clip_norm / norm if clip_norm is not None and norm > clip_norm else 1.0

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name] * scale if scale != 1.0 else grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[name] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
        new_m[name] = m.astype(p.dtype)
        new_v[name] = v.astype(p.dtype)
    return new_params, replace(state, m=new_m, v=new_v, step=step)
