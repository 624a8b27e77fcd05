"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericalError
from .rng import Rng
from .tensor import Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def finite_diff_check(scalar_fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
                      max_coords: int | None = None, rng: Rng | None = None) -> float:
    """Largest relative error between autodiff and central-difference gradients.

    Args:
        scalar_fn: called as ``scalar_fn(*inputs)``; must return a one-element tensor.
        inputs: tensors to differentiate with respect to (``requires_grad`` is forced on).
        eps: central-difference step.
        max_coords: if given, check at most this many randomly chosen coordinates
            per input (chosen with ``rng``, default seed 0).

    Relative error per coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = scalar_fn(*inputs)
    if out.size != 1:
        raise ValueError(f"scalar_fn must return a scalar, got shape {list(out.shape)}")
    out.backward(np.ones_like(out.data))
    rng = rng or Rng(0)
    worst = 0.0
    with no_grad():
        for t in inputs:
            analytic = np.zeros(t.shape) if t.grad is None else t.grad
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.subset(flat.size, max_coords)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = scalar_fn(*inputs).item()
                flat[i] = orig - eps
                f_minus = scalar_fn(*inputs).item()
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise NumericalError(f"finite_diff_check: non-finite function value at coordinate {i}")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                worst = max(worst, float(relative_error(analytic.reshape(-1)[i], numeric)))
    return worst
