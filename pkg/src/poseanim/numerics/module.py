"""Minimal parameter containers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .ops import linear
from .rng import Rng
from .tensor import Tensor


class Module:
    """Anything holding :class:`Tensor` attributes, child modules, or lists of modules.

    Parameter names are dotted attribute paths in attribute-definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield from child.named_parameters(f"{name}.{i}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix.rstrip("."), self
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield from child.named_modules(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters() if v.requires_grad}

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def requires_grad_(self, flag: bool) -> Module:
        for _, p in self.named_parameters():
            p.requires_grad = flag
        return self

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise KeyError(f"parameter mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in params.items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"{name}: stored shape {arrays[name].shape} != model shape {p.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)


class Linear(Module):
    """Dense layer, weight ``[d_out, d_in]`` drawn N(0, std^2) with std = 1/sqrt(d_in) by default."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, bias: bool = True, std: float | None = None):
        self.d_in = d_in
        self.d_out = d_out
        std = 1.0 / math.sqrt(d_in) if std is None else std
        self.weight = Tensor(rng.normal((d_out, d_in), std), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)
