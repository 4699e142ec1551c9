"""
Layer building blocks on top of the autodiff engine.

Modules register Parameter and Module attributes automatically, so
``named_parameters`` yields dotted names such as ``shared.0.cross_attn.q.weight``.
"""

from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from .tensor import (
    Parameter, Tensor, embedding, gelu, get_default_dtype, layer_norm, masked_fill,
    softmax,
)
from ..exceptions import CheckpointError

NEG_INF = -1e9


class Module:
    """Container of parameters and submodules."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name: str, value) -> None:
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # ==================== Parameters ====================

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self, prefix: str) -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._params.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module._walk(f"{prefix}{name}.")

    def parameters(self, prefix: str = "") -> Dict[str, Parameter]:
        return dict(self.named_parameters(prefix))

    def label_parameters(self) -> None:
        """Name every parameter after its dotted path (used in error messages)."""
        for name, param in self.named_parameters():
            param.name = name

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def to(self, dtype) -> "Module":
        """Cast every parameter in place."""
        for _, param in self.named_parameters():
            param.data = param.data.astype(dtype)
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy arrays into parameters.

        Raises:
            CheckpointError: On missing/unexpected names or shape mismatch
        """
        params = self.parameters()
        missing = [n for n in params if n not in state]
        unexpected = [n for n in state if n not in params]
        if strict and (missing or unexpected):
            raise CheckpointError(
                f"State does not fit the model (missing={missing[:3]}, "
                f"unexpected={unexpected[:3]})"
            )
        for name, param in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(
                    f"Shape mismatch for '{name}': {value.shape} vs {param.shape}"
                )
            param.data = value.astype(param.data.dtype, copy=True)


class ModuleList(Module):
    """Indexed sequence of modules."""

    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        object.__setattr__(self, "_items", [])
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


# ==================== Initialization ====================

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(get_default_dtype())


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal positional encoding, shape (length, d_model)."""
    positions = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table.astype(get_default_dtype())


def causal_mask(length: int) -> np.ndarray:
    """(length, length) boolean mask, True above the diagonal (blocked)."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


# ==================== Layers ====================

class Linear(Module):
    """y = x @ W + b, W of shape (in, out)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        zero_init: bool = False,
    ):
        super().__init__()
        if zero_init:
            weight = np.zeros((in_features, out_features), dtype=get_default_dtype())
        else:
            weight = xavier_uniform(rng, in_features, out_features)
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(out_features, dtype=get_default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class Embedding(Module):

    def __init__(self, num: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, num, dim))

    def forward(self, ids: np.ndarray) -> Tensor:
        return embedding(self.weight, ids)


class LayerNorm(Module):

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim, dtype=get_default_dtype()))
        self.beta = Parameter(np.zeros(dim, dtype=get_default_dtype()))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class MLP(Module):
    """Linear layers with GELU after each one."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator):
        super().__init__()
        self.layers = ModuleList(
            [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        )

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = gelu(layer(x))
        return x


class FeedForward(Module):

    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.up = Linear(d_model, d_ff, rng)
        self.down = Linear(d_ff, d_model, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.down(gelu(self.up(x)))


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over (B, T, D) inputs.

    The mask is boolean and broadcastable to (B, heads, Tq, Tk);
    True marks a blocked query/key pair.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def forward(self, query: Tensor, context: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        b, tq, d = query.shape
        q = self._split(self.q(query))
        k = self._split(self.k(context))
        v = self._split(self.v(context))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = masked_fill(scores, mask, NEG_INF)
        attended = softmax(scores, axis=-1) @ v
        return self.o(attended.transpose(0, 2, 1, 3).reshape(b, tq, d))


class EncoderLayer(Module):
    """Pre-norm self-attention block."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ff(self.norm2(x))


class DecoderLayer(Module):
    """Pre-norm causal self-attention, cross-attention to memory, feed-forward."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm3 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)

    def forward(
        self,
        x: Tensor,
        memory: Tensor,
        self_mask: Optional[np.ndarray] = None,
        memory_mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        h = self.norm1(x)
        x = x + self.self_attn(h, h, self_mask)
        x = x + self.cross_attn(self.norm2(x), memory, memory_mask)
        return x + self.ff(self.norm3(x))


def decoder_stack(
    n_layers: int, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator
) -> ModuleList:
    return ModuleList([DecoderLayer(d_model, n_heads, d_ff, rng) for _ in range(n_layers)])


def run_decoders(
    layers: ModuleList,
    x: Tensor,
    memory: Tensor,
    self_mask: Optional[np.ndarray],
    memory_mask: Optional[np.ndarray],
) -> Tensor:
    for layer in layers:
        x = layer(x, memory, self_mask, memory_mask)
    return x
