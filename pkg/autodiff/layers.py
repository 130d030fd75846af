"""
Fully connected and GRU layers.

Modules are parameter-free descriptions: `init` returns a flat
{"<prefix>/<name>": array} dict and `__call__` reads the lifted Tensors for its
prefix, so snapshots of a network are plain dict copies.
"""

from collections.abc import Mapping

import numpy as np

from autodiff.tensor import DEFAULT_DTYPE, Tensor, TensorLike, add, as_tensor, elu, matmul, mul, sigmoid, tanh
from errors import ShapeError

Params = Mapping[str, Tensor]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def dense_forward(x: TensorLike, weights: Tensor, bias: Tensor) -> Tensor:
    x = as_tensor(x, like=weights)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not match weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match weights {weights.shape}")
    return add(matmul(x, weights), bias)


def gru_step(h_prev: TensorLike, x: TensorLike, w_x: Tensor, w_h: Tensor, bias: Tensor) -> Tensor:
    """
    One GRU step. Columns of w_x, w_h and bias are [update | reset | candidate]:

        u = sigmoid(x Wx_u + h Wh_u + b_u)
        r = sigmoid(x Wx_r + h Wh_r + b_r)
        n = tanh(x Wx_n + r * (h Wh_n) + b_n)
        h' = (1 - u) * n + u * h
    """
    h_prev = as_tensor(h_prev, like=w_h)
    x = as_tensor(x, like=w_x)
    hidden = w_h.shape[0]
    if w_h.shape != (hidden, 3 * hidden) or w_x.shape[1] != 3 * hidden or bias.shape != (3 * hidden,):
        raise ShapeError(f"gru: inconsistent parameter shapes {w_x.shape}, {w_h.shape}, {bias.shape}")
    if h_prev.shape[-1] != hidden or x.shape[-1] != w_x.shape[0]:
        raise ShapeError(f"gru: state {h_prev.shape} / input {x.shape} do not match parameters")

    gx = add(matmul(x, w_x), bias)
    gh = matmul(h_prev, w_h)
    u = sigmoid(gx[..., :hidden] + gh[..., :hidden])
    r = sigmoid(gx[..., hidden:2 * hidden] + gh[..., hidden:2 * hidden])
    n = tanh(gx[..., 2 * hidden:] + mul(r, gh[..., 2 * hidden:]))
    return (1.0 - u) * n + u * h_prev


class Module:
    prefix: str

    def shapes(self) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def init(self, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> dict[str, np.ndarray]:
        raise NotImplementedError


class Dense(Module):
    def __init__(self, prefix: str, in_dim: int, out_dim: int, activation: str | None = None):
        self.prefix = prefix
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation

    def shapes(self):
        return {f"{self.prefix}/w": (self.in_dim, self.out_dim), f"{self.prefix}/b": (self.out_dim,)}

    def init(self, rng, dtype=DEFAULT_DTYPE):
        return {
            f"{self.prefix}/w": glorot_uniform(rng, self.in_dim, self.out_dim, dtype),
            f"{self.prefix}/b": np.zeros(self.out_dim, dtype=dtype),
        }

    def __call__(self, params: Params, x: TensorLike) -> Tensor:
        y = dense_forward(x, params[f"{self.prefix}/w"], params[f"{self.prefix}/b"])
        return elu(y) if self.activation == "elu" else y


class MLP(Module):
    """`layers` hidden ELU layers of width `hidden`, then a linear output layer."""

    def __init__(self, prefix: str, in_dim: int, hidden: int, layers: int, out_dim: int):
        self.prefix = prefix
        dims = [in_dim] + [hidden] * layers
        self.hidden_layers = [Dense(f"{prefix}/h{i}", dims[i], dims[i + 1], "elu") for i in range(layers)]
        self.out = Dense(f"{prefix}/out", dims[-1], out_dim)

    def shapes(self):
        shapes = {}
        for layer in [*self.hidden_layers, self.out]:
            shapes.update(layer.shapes())
        return shapes

    def init(self, rng, dtype=DEFAULT_DTYPE):
        params = {}
        for layer in [*self.hidden_layers, self.out]:
            params.update(layer.init(rng, dtype))
        return params

    def __call__(self, params: Params, x: TensorLike) -> Tensor:
        for layer in self.hidden_layers:
            x = layer(params, x)
        return self.out(params, x)


class GRUCell(Module):
    def __init__(self, prefix: str, in_dim: int, hidden: int):
        self.prefix = prefix
        self.in_dim = in_dim
        self.hidden = hidden

    def shapes(self):
        return {
            f"{self.prefix}/w_x": (self.in_dim, 3 * self.hidden),
            f"{self.prefix}/w_h": (self.hidden, 3 * self.hidden),
            f"{self.prefix}/b": (3 * self.hidden,),
        }

    def init(self, rng, dtype=DEFAULT_DTYPE):
        return {
            f"{self.prefix}/w_x": glorot_uniform(rng, self.in_dim, 3 * self.hidden, dtype),
            f"{self.prefix}/w_h": glorot_uniform(rng, self.hidden, 3 * self.hidden, dtype),
            f"{self.prefix}/b": np.zeros(3 * self.hidden, dtype=dtype),
        }

    def __call__(self, params: Params, h_prev: TensorLike, x: TensorLike) -> Tensor:
        return gru_step(h_prev, x, params[f"{self.prefix}/w_x"], params[f"{self.prefix}/w_h"],
                        params[f"{self.prefix}/b"])
