"""
Reverse-mode automatic differentiation over numpy arrays.

Every operation returns a new Tensor that remembers its parents and a
closure mapping the output gradient to parent gradients. ``Graph.trace``
recovers the evaluation order from an output; ``backward`` walks it in
reverse.

Usage:
    x = Tensor(np.ones((2, 3)), requires_grad=True, name="x")
    loss = (x * x).sum()
    grads = backward(loss, {"x": x})
"""

from dataclasses import dataclass
from typing import (
    Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union
)
from contextlib import contextmanager
import threading

import numpy as np

from ..exceptions import ShapeError

_state = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def get_default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def precision(dtype: Union[str, np.dtype] = "float64"):
    """
    Switch the dtype used for new tensors and constants.

    Example:
        with precision("float64"):
            model.to("float64")
            error = gradient_check(loss_fn, model.parameters())
    """
    previous = get_default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad():
    """Run operations without recording the graph."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """
    Dense array with an optional gradient tape.

    Attributes:
        data: Underlying numpy array (row-major)
        grad: Accumulated gradient after ``Tensor.backward``
        requires_grad: Whether gradients flow to this tensor
        name: Optional label used in error messages and parameter maps
        op: Name of the operation that produced it ("leaf" for inputs)
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")
    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Union[str, np.dtype]] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or get_default_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    # ==================== Introspection ====================

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def label(self) -> str:
        return self.name or self.op

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{grad})"

    # ==================== Operators ====================

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __pow__(self, exponent: float): return power(self, exponent)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes if axes else None)
    def swapaxes(self, a: int, b: int): return swapaxes(self, a, b)
    def exp(self): return exp(self)
    def log(self): return log(self)
    def tanh(self): return tanh(self)

    def backward(self) -> None:
        """Accumulate gradients into ``.grad`` of every reachable leaf."""
        for leaf, grad in _leaf_gradients(self).values():
            leaf.grad = grad if leaf.grad is None else leaf.grad + grad


class Parameter(Tensor):
    """Trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data: Any, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


# ==================== Graph ====================

@dataclass
class Node:
    """One operation record: its output tensor and parent node indices."""
    op: str
    tensor: Tensor
    parents: Tuple[int, ...]


class Graph:
    """
    Operations behind an output, in evaluation order.

    Every node's parents appear before it, so a reverse sweep visits
    each node after all of its consumers.
    """

    def __init__(self, nodes: List[Node]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        order: List[Tensor] = []
        index: Dict[int, int] = {}
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if id(tensor) in index:
                continue
            if expanded:
                index[id(tensor)] = len(order)
                order.append(tensor)
                continue
            stack.append((tensor, True))
            for parent in tensor._parents:
                if id(parent) not in index:
                    stack.append((parent, False))
        nodes = [
            Node(t.op, t, tuple(index[id(p)] for p in t._parents)) for t in order
        ]
        return cls(nodes)

    @property
    def output(self) -> Tensor:
        return self.nodes[-1].tensor

    def leaves(self) -> Iterator[Tensor]:
        for node in self.nodes:
            if not node.parents:
                yield node.tensor

    def __len__(self) -> int:
        return len(self.nodes)


def _leaf_gradients(loss: Tensor) -> Dict[int, Tuple[Tensor, np.ndarray]]:
    if loss.data.size != 1:
        raise ShapeError(
            "loss must be a scalar", node=f"backward({loss.label()})", shapes=[loss.shape]
        )
    graph = Graph.trace(loss)
    nodes = graph.nodes
    pending: Dict[int, np.ndarray] = {len(nodes) - 1: np.ones_like(loss.data)}
    leaves: Dict[int, Tuple[Tensor, np.ndarray]] = {}

    for i in range(len(nodes) - 1, -1, -1):
        grad = pending.pop(i, None)
        if grad is None:
            continue
        node = nodes[i]
        tensor = node.tensor
        if tensor._backward is None:
            if tensor.requires_grad:
                leaves[id(tensor)] = (tensor, grad)
            continue
        for parent_index, parent_grad in zip(node.parents, tensor._backward(grad)):
            if parent_grad is None or not nodes[parent_index].tensor.requires_grad:
                continue
            if parent_index in pending:
                pending[parent_index] = pending[parent_index] + parent_grad
            else:
                pending[parent_index] = parent_grad
    return leaves


def backward(
    loss: Tensor,
    params: Mapping[str, Tensor],
) -> Dict[str, np.ndarray]:
    """
    Gradients of a scalar loss with respect to named parameters.

    Parameters the loss does not depend on get exact zero arrays.

    Raises:
        ShapeError: If loss is not a scalar
    """
    found = _leaf_gradients(loss)
    grads: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        entry = found.get(id(param))
        if entry is None:
            grads[name] = np.zeros_like(param.data)
        else:
            grads[name] = np.asarray(entry[1], dtype=param.data.dtype).reshape(param.shape)
    return grads


# ==================== Helpers ====================

def _result(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(value, dtype=dtype), dtype=dtype)


def _pair(a: Any, b: Any) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            "operands cannot be broadcast together",
            node=f"{op}({a.label()}, {b.label()})",
            shapes=[a.shape, b.shape],
        ) from None


def _normalize_axes(axis: Any, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# ==================== Elementwise ====================

def add(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    return _result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    return _result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    return _result(
        a.data / b.data, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    return _result(
        a.data ** exponent, (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1),), "pow",
    )


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    return _result(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward_fn(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(out.astype(x.dtype, copy=False), (a,), backward_fn, "gelu")


def minimum(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("minimum", a, b)
    take_a = a.data <= b.data
    return _result(
        np.minimum(a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
        "minimum",
    )


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    return _result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clip")


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True by a constant."""
    mask = np.asarray(mask, dtype=bool)
    try:
        shape = np.broadcast_shapes(a.shape, mask.shape)
    except ValueError:
        shape = None
    if shape != a.shape:
        raise ShapeError(
            "mask does not broadcast to tensor", node=f"masked_fill({a.label()})",
            shapes=[a.shape, mask.shape],
        )
    return _result(
        np.where(mask, np.asarray(value, dtype=a.dtype), a.data), (a,),
        lambda g: (np.where(mask, 0, g).astype(g.dtype, copy=False),), "masked_fill",
    )


# ==================== Linear algebra / shape ====================

def matmul(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            "inner dimensions do not match", node=f"matmul({a.label()}, {b.label()})",
            shapes=[a.shape, b.shape],
        )
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(
            "batch dimensions do not broadcast", node=f"matmul({a.label()}, {b.label()})",
            shapes=[a.shape, b.shape],
        ) from None

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward_fn, "matmul")


def tsum(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _result(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axis, keepdims) * (1.0 / max(count, 1))


def reshape(a: Tensor, shape: Any) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(
            f"cannot reshape to {shape}", node=f"reshape({a.label()})", shapes=[a.shape]
        ) from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    return _result(
        np.swapaxes(a.data, axis1, axis2), (a,),
        lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes",
    )


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "cannot concatenate", node="concat(" + ", ".join(t.label() for t in tensors) + ")",
            shapes=[t.shape for t in tensors],
        ) from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _result(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "cannot stack", node="stack", shapes=[t.shape for t in tensors]
        ) from None
    return _result(
        out, tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))), "stack",
    )


def getitem(a: Tensor, index: Any) -> Tensor:
    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), backward_fn, "getitem")


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of weight selected by integer ids (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeError(
            f"id out of range [0, {weight.shape[0]})", node=f"embedding({weight.label()})",
            shapes=[weight.shape, ids.shape],
        )

    def backward_fn(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        return (full,)

    return _result(weight.data[ids], (weight,), backward_fn, "embedding")


def take_last(a: Tensor, ids: np.ndarray) -> Tensor:
    """out[...] = a[..., ids[...]] (one pick per row of the last axis)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != a.shape[:-1]:
        raise ShapeError(
            "index shape must match leading dims", node=f"take_last({a.label()})",
            shapes=[a.shape, ids.shape],
        )
    out = np.take_along_axis(a.data, ids[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, ids[..., None], g[..., None], axis=-1)
        return (full,)

    return _result(out, (a,), backward_fn, "take_last")


# ==================== Normalization ====================

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _result(
        out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),), "softmax"
    )


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return _result(
        out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),), "log_softmax"
    )


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gamma.shape != (a.shape[-1],) or beta.shape != (a.shape[-1],):
        raise ShapeError(
            "affine parameters must match the last axis",
            node=f"layer_norm({a.label()})", shapes=[a.shape, gamma.shape, beta.shape],
        )
    x = a.data
    d = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        dxhat = g * gamma.data
        dx = (inv / d) * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        return dx, dgamma, dbeta

    return _result(out, (a, gamma, beta), backward_fn, "layer_norm")
