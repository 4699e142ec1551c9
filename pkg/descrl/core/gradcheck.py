"""
Central finite-difference gradient checking.
Only meaningful in 64-bit mode; see ``tensor.precision``.
"""

from typing import Callable, Dict, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad
from ..exceptions import ValidationError


def relative_errors(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-4,
) -> Dict[str, float]:
    """
    Per-parameter relative error ||a - n|| / max(||a||, ||n||, 1e-8).

    Args:
        loss_fn: Rebuilds the scalar loss from the current parameter values
        params: Tensors to perturb (modified in place and restored)
        h: Finite-difference step
    """
    for name, param in params.items():
        if param.data.dtype != np.float64:
            raise ValidationError(
                f"gradient_check needs float64 tensors, '{name}' is {param.data.dtype}",
                field=name,
            )
    analytic = backward(loss_fn(), params)

    errors: Dict[str, float] = {}
    with no_grad():
        for name, param in params.items():
            numeric = np.zeros_like(param.data)
            for index in np.ndindex(param.shape):
                original = param.data[index]
                param.data[index] = original + h
                plus = loss_fn().item()
                param.data[index] = original - h
                minus = loss_fn().item()
                param.data[index] = original
                numeric[index] = (plus - minus) / (2.0 * h)
            a = analytic[name]
            scale = max(np.linalg.norm(a), np.linalg.norm(numeric), 1e-8)
            errors[name] = float(np.linalg.norm(a - numeric) / scale)
    return errors


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-4,
) -> float:
    """Max relative error over parameters."""
    errors = relative_errors(loss_fn, params, h)
    return max(errors.values()) if errors else 0.0
