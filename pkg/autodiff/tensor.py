"""
Reverse-mode automatic differentiation over numpy arrays.

A Tensor is an immutable node: a read-only array, the tensors it was computed
from, and a vector-Jacobian product closure mapping the output cotangent to one
cotangent per parent. `backward` sorts the graph once and sweeps it in reverse.

Everything that needs gradients (world model, actor, critic) is written as
plain functions over Tensors; parameters are leaf Tensors lifted from a flat
`dict[str, np.ndarray]` for each training step.
"""

from collections.abc import Callable, Iterable, Mapping, Sequence
from typing import Union

import numpy as np

from config import config
from errors import NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float32

Vjp = Callable[[np.ndarray], tuple[Union[np.ndarray, None], ...]]


def _float_array(data, dtype=None, copy: bool = False) -> np.ndarray:
    if dtype is None:
        if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            dtype = data.dtype
        else:
            dtype = DEFAULT_DTYPE
    arr = np.array(data, dtype=dtype, copy=True) if copy else np.asarray(data, dtype=dtype)
    return arr


class Tensor:
    __slots__ = ("data", "parents", "vjp", "op", "__weakref__")

    def __init__(self, data, parents: tuple["Tensor", ...] = (), vjp: Vjp | None = None,
                 op: str = "leaf", dtype=None, copy: bool = True):
        arr = _float_array(data, dtype=dtype, copy=copy and not parents)
        if config.CHECK_FINITE and not np.isfinite(arr).all():
            raise NonFiniteError(f"'{op}' produced non-finite values")
        arr.flags.writeable = False
        self.data = arr
        self.parents = parents
        self.vjp = vjp
        self.op = op

    # -- introspection -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.dtype})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: TensorLike, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def constant(value, dtype=None) -> Tensor:
    return Tensor(value, dtype=dtype)


def lift(params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    """Wrap a parameter dict as leaf tensors without copying."""
    return {name: Tensor(value, copy=False, op=f"param:{name}") for name, value in params.items()}


def _pair(a: TensorLike, b: TensorLike) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -------------------------------------------------------------


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                  "mul")


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return Tensor(out, (a, b),
                  lambda g: (_unbroadcast(g / b.data, a.shape),
                             _unbroadcast(-g * out / b.data, b.shape)),
                  "div")


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,), "neg")


def square(a: Tensor) -> Tensor:
    return Tensor(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    return Tensor(np.logaddexp(0.0, a.data).astype(a.dtype), (a,),
                  lambda g: (g * _sigmoid(a.data),), "softplus")


def elu(a: Tensor) -> Tensor:
    """ELU with alpha 1. The derivative at exactly 0 is taken from the right (1)."""
    x = a.data
    positive = x >= 0
    out = np.where(positive, x, np.expm1(np.minimum(x, 0.0))).astype(a.dtype)
    return Tensor(out, (a,), lambda g: (g * np.where(positive, 1.0, out + 1.0),), "elu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def maximum(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) with the gradient blocked where the floor is active."""
    active = a.data >= floor
    return Tensor(np.maximum(a.data, floor), (a,), lambda g: (g * active,), "maximum")


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data, op="stop_gradient", copy=False)


# -- reductions and shape ----------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return Tensor(out, (a,), vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a: Tensor, index) -> Tensor:
    def vjp(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor(a.data[index], (a,), vjp, "getitem")


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    like = next((t for t in tensors if isinstance(t, Tensor)), None)
    parts = tuple(as_tensor(t, like=like) for t in tensors)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return Tensor(np.concatenate([p.data for p in parts], axis=axis), parts,
                  lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(tensors)
    return Tensor(np.stack([p.data for p in parts], axis=axis), parts,
                  lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(parts))), "stack")


def matmul(a: TensorLike, w: TensorLike) -> Tensor:
    """a @ w for a of shape (..., k) and a 2-D w of shape (k, m)."""
    a, w = _pair(a, w)
    if w.ndim != 2 or a.shape[-1] != w.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {w.shape}")
    k, m = w.shape

    def vjp(g):
        grad_a = g @ w.data.T
        grad_w = a.data.reshape(-1, k).T @ g.reshape(-1, m)
        return grad_a, grad_w

    return Tensor(a.data @ w.data, (a, w), vjp, "matmul")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return Tensor(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
                  "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return Tensor(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),),
                  "log_softmax")


def straight_through(sample: np.ndarray, probs: Tensor) -> Tensor:
    """Value of `sample`, gradient routed to `probs` unchanged."""
    return Tensor(sample.astype(probs.dtype), (probs,), lambda g: (g,), "straight_through")


# -- graph and backward ------------------------------------------------------


class Graph:
    """Nodes reachable from an output, in topological order (parents first)."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = self._topological_order(output)

    @staticmethod
    def _topological_order(output: Tensor) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack_: list[tuple[Tensor, bool]] = [(output, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack_.append((node, True))
            for parent in node.parents:
                if id(parent) not in visited:
                    stack_.append((parent, False))
        return order

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf]


def backward(loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[int, np.ndarray] | list[np.ndarray]:
    """
    Gradients of a scalar `loss`.

    With `wrt` given, returns one array per requested tensor (zeros for tensors
    with no path to the loss). Otherwise returns {id(leaf): gradient} for every
    leaf in the graph.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph(loss)
    wrt = list(wrt) if wrt is not None else None
    relevant: set[int] | None = None
    if wrt is not None:
        # only sweep nodes that lie on a path to a requested tensor
        relevant = {id(t) for t in wrt}
        for node in graph.nodes:
            if any(id(p) in relevant for p in node.parents):
                relevant.add(id(node))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            leaf_grads[id(node)] = g
            continue
        if node.vjp is None or (relevant is not None and id(node) not in relevant):
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or (relevant is not None and id(parent) not in relevant):
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg

    if wrt is None:
        return leaf_grads
    result = []
    for t in wrt:
        g = leaf_grads.get(id(t))
        result.append(np.zeros_like(t.data) if g is None else np.asarray(g, dtype=t.dtype).reshape(t.shape))
    return result


def grad_dict(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    names = list(params)
    return dict(zip(names, backward(loss, [params[n] for n in names])))
