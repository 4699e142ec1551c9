"""
Adam with bias correction, plus global-norm gradient clipping.

Updates replace each parameter's array instead of writing into it, so
arrays captured by an earlier forward pass stay untouched.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from .tensor import Tensor
from ..exceptions import GradientError, ShapeError


@dataclass
class AdamState:
    """
    Optimizer state.

    Attributes:
        lr: Step size
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator floor
        step: Number of applied updates
        m: First moments by parameter name
        v: Second moments by parameter name
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def _check_grads(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
    for name, grad in grads.items():
        if name not in params:
            continue
        if grad.shape != params[name].shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match parameter",
                node=f"adam({name})", shapes=[params[name].shape, grad.shape],
            )
        if not np.all(np.isfinite(grad)):
            raise GradientError(f"Non-finite gradient for '{name}'", parameter=name)


def adam_update(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """
    Apply one Adam step to every parameter that has a gradient.

    Nothing is modified when any gradient is non-finite.

    Raises:
        GradientError: On NaN/Inf gradients
        ShapeError: If a gradient does not match its parameter
    """
    _check_grads(params, grads)
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        update = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        param.data = (param.data - update).astype(param.data.dtype, copy=False)


def clip_grad_norm(
    grads: Mapping[str, np.ndarray], max_norm: float
) -> Tuple[Dict[str, np.ndarray], float]:
    """Scale gradients so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm <= 0 or total <= max_norm or total == 0.0:
        return dict(grads), total
    scale = max_norm / (total + 1e-6)
    return {k: (g * scale).astype(g.dtype, copy=False) for k, g in grads.items()}, total


class Adam:
    """
    Adam over a fixed named parameter set.

    Example:
        opt = Adam(model.parameters(), lr=2.5e-4)
        opt.step(backward(loss, opt.params))
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        max_grad_norm: float = 0.0,
    ):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        self.max_grad_norm = max_grad_norm

    def step(self, grads: Mapping[str, np.ndarray]) -> float:
        """Apply one update; returns the pre-clip gradient norm."""
        grads = {k: g for k, g in grads.items() if k in self.params}
        _check_grads(self.params, grads)
        grads, norm = clip_grad_norm(grads, self.max_grad_norm)
        adam_update(self.params, grads, self.state)
        return norm
