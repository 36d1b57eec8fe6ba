"""Minimal reverse-mode autodiff over numpy arrays.

Every op builds an output Tensor that remembers its parents and a closure
mapping the output gradient to one gradient per parent. ``Tensor.backward``
orders the recorded graph topologically and replays it in reverse.
"""

import logging
import math
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.core.errors import ShapeError

logger = logging.getLogger(__name__)

DTYPES = {"float32": np.float32, "float64": np.float64}

LAYER_NORM_EPS = 1e-5

_state = {"dtype": np.float32, "grad_enabled": True}

ArrayLike = Union[np.ndarray, float, int, Sequence]


def get_default_dtype():
    return _state["dtype"]


def set_default_dtype(name: str) -> None:
    if name not in DTYPES:
        raise ValueError(f"Unknown precision '{name}', expected one of {sorted(DTYPES)}")
    _state["dtype"] = DTYPES[name]


@contextmanager
def precision(name: str):
    """Temporarily switch the dtype new tensors and parameters are created with"""
    previous = _state["dtype"]
    set_default_dtype(name)
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextmanager
def no_grad():
    """Disable graph recording (evaluation and embedding extraction)"""
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


def _as_array(data: ArrayLike) -> np.ndarray:
    if not isinstance(data, np.ndarray):
        return np.asarray(data, dtype=get_default_dtype())
    if data.dtype not in (np.float32, np.float64):
        return data.astype(get_default_dtype())
    return data


class Tensor:
    """Dense array with optional gradient tracking"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], tuple]] = None
        self._op = ""

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf that requires grad"""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward (non-scalar output needs an explicit grad)", self.shape)
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        pending = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """Named leaf tensor; frozen parameters never accumulate gradient"""

    def __init__(self, name: str, data: ArrayLike, frozen: bool = False):
        super().__init__(np.array(_as_array(data), copy=True), requires_grad=not frozen)
        self.name = name
        self.frozen = frozen

    def freeze(self) -> None:
        self.frozen = True
        self.requires_grad = False
        self.grad = None

    def unfreeze(self) -> None:
        self.frozen = False
        self.requires_grad = True

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape}, frozen={self.frozen})"


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    requires = _state["grad_enabled"] and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    x = _lift(x)

    def backward(g):
        return (g * factor,)

    return _result(x.data * factor, (x,), backward, "scale")


def exp(x: Tensor) -> Tensor:
    x = _lift(x)
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _result(out, (x,), backward, "exp")


def log(x: Tensor) -> Tensor:
    x = _lift(x)

    def backward(g):
        return (g / x.data,)

    return _result(np.log(x.data), (x,), backward, "log")


def clamp(x: Tensor, low: float = -math.inf, high: float = math.inf) -> Tensor:
    x = _lift(x)
    inside = (x.data >= low) & (x.data <= high)

    def backward(g):
        return (g * inside,)

    return _result(np.clip(x.data, low, high), (x,), backward, "clamp")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU"""
    x = _lift(x)
    inner = _GELU_C * (x.data + 0.044715 * x.data**3)
    tanh = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + tanh)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        local = 0.5 * (1.0 + tanh) + 0.5 * x.data * (1.0 - tanh**2) * d_inner
        return (g * local,)

    return _result(out, (x,), backward, "gelu")


# -- linear algebra and shape ------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes"""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        grad_a = grad_b = None
        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return grad_a, grad_b

    return _result(out, (a, b), backward, "matmul")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _lift(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _result(out, (x,), backward, "reshape")


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    x = _lift(x)

    def backward(g):
        return (np.swapaxes(g, axis1, axis2),)

    return _result(np.swapaxes(x.data, axis1, axis2), (x,), backward, "swapaxes")


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _lift(x)
    try:
        out = np.broadcast_to(x.data, tuple(shape))
    except ValueError:
        raise ShapeError("broadcast_to", x.shape, tuple(shape)) from None

    def backward(g):
        return (_unbroadcast(g, x.shape),)

    return _result(np.array(out), (x,), backward, "broadcast_to")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if axis < 0:
        axis += tensors[0].ndim + 1
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def index(x: Tensor, key) -> Tensor:
    """Basic or advanced indexing (the slice op)"""
    x = _lift(x)
    try:
        out = x.data[key]
    except IndexError:
        raise ShapeError(f"index {key!r}", x.shape) from None

    parts = key if isinstance(key, tuple) else (key,)
    advanced = any(isinstance(p, (np.ndarray, list)) for p in parts)

    def backward(g):
        grad = np.zeros_like(x.data)
        if advanced:
            np.add.at(grad, key, g)
        else:
            grad[key] += g
        return (grad,)

    return _result(np.array(out), (x,), backward, "index")


# -- reductions and normalisation -------------------------------------------


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``"""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gamma.data + beta.data

    def backward(g):
        grad_gamma = (g * normed).reshape(-1, x.shape[-1]).sum(axis=0)
        grad_beta = g.reshape(-1, x.shape[-1]).sum(axis=0)
        g_normed = g * gamma.data
        grad_x = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta

    return _result(out, (x, gamma, beta), backward, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = _lift(x)
    norm = np.maximum(np.sqrt((x.data**2).sum(axis=axis, keepdims=True)), eps)
    out = x.data / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return _result(out, (x,), backward, "l2_normalize")
