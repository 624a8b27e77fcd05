"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moments keyed by parameter name, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
               lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0) -> AdamState:
    """Apply one AdamW update in place (in sorted name order).

    ``p <- p * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)``.  Parameters
    missing from ``grads`` are treated as having zero gradient.
    """
    if state.step < 0:
        raise ValueError("AdamState.step must be non-negative")
    for name in sorted(grads):
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericalError(f"adamw_step: non-finite gradient for parameter {name!r}")
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {name!r} shape {params[name].shape}")
    step = state.step + 1
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = p.data * (1.0 - lr * weight_decay) - lr * update
    state.step = step
    return state
