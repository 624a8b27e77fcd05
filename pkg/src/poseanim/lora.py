"""Low-rank adapters for the transformer blocks.

A target is a dotted path to a :class:`Linear` inside every block, for example
``attn.q`` or ``mlp.fc1``.  Wrapping keeps the base weight under its original
name and adds ``lora_A`` / ``lora_B`` next to it, so checkpoint names read
``blocks.0.attn.q.lora_A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import LoraConfig
from .dit import NEW_MODULES, DiT, block_parameter_count
from .errors import ConfigError
from .numerics import Linear, Module, Rng, Tensor, add, linear, mul


class LoraLinear(Module):
    """``y = x W^T + b + scale * (x A^T) B^T`` with ``A`` random and ``B`` zero at init."""

    def __init__(self, base: Linear, rank: int, scale: float, rng: Rng):
        self.d_in = base.d_in
        self.d_out = base.d_out
        self.weight = base.weight
        self.bias = base.bias
        self.lora_A = Tensor(rng.normal((rank, base.d_in), 1.0 / math.sqrt(rank)), requires_grad=True)
        self.lora_B = Tensor(np.zeros((base.d_out, rank)), requires_grad=True)
        self._scale = scale

    @property
    def rank(self) -> int:
        return self.lora_A.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        base = linear(x, self.weight, self.bias)
        return add(base, mul(linear(linear(x, self.lora_A), self.lora_B), self._scale))

    def merged(self) -> Linear:
        out = Linear.__new__(Linear)
        out.d_in, out.d_out = self.d_in, self.d_out
        w = self.weight.data + self._scale * (self.lora_B.data @ self.lora_A.data)
        out.weight = Tensor(w, requires_grad=self.weight.requires_grad)
        out.bias = self.bias
        return out


@dataclass
class TargetCensus:
    name: str
    d_in: int
    d_out: int
    rank: int

    @property
    def params(self) -> int:
        return self.rank * (self.d_in + self.d_out)


@dataclass
class LoraReport:
    """Trainable-parameter census after :func:`lora_apply`."""

    targets: list[TargetCensus] = field(default_factory=list)
    block_params: int = 0
    base_block_params: int = 0
    trainable_new_module_params: int = 0

    @property
    def adapter_params(self) -> int:
        return sum(t.params for t in self.targets)

    @property
    def block_trainable_fraction(self) -> float:
        """Adapter parameters over all parameters inside the blocks (base + adapters)."""
        return self.adapter_params / self.block_params

    def to_dict(self) -> dict:
        return {
            "targets": [{"name": t.name, "d_in": t.d_in, "d_out": t.d_out, "rank": t.rank, "params": t.params}
                        for t in self.targets],
            "adapter_params": self.adapter_params,
            "base_block_params": self.base_block_params,
            "block_params": self.block_params,
            "block_trainable_fraction": self.block_trainable_fraction,
            "trainable_new_module_params": self.trainable_new_module_params,
        }

    def table(self) -> str:
        rows = [f"{'target':<24} {'d_in':>5} {'d_out':>5} {'r':>3} {'params':>7}"]
        rows += [f"{t.name:<24} {t.d_in:>5} {t.d_out:>5} {t.rank:>3} {t.params:>7}" for t in self.targets]
        rows.append(f"adapters {self.adapter_params} of {self.block_params} block params "
                    f"({100 * self.block_trainable_fraction:.2f}%)")
        return "\n".join(rows)


def _resolve(block: Module, path: str):
    parent = block
    parts = path.split(".")
    for part in parts[:-1]:
        parent = getattr(parent, part, None)
        if not isinstance(parent, Module):
            return None, None
    leaf = getattr(parent, parts[-1], None)
    return parent, leaf


def lora_targets_available(dit: DiT) -> list[str]:
    if not dit.blocks:
        return []
    return [name for name, m in dit.blocks[0].named_modules() if isinstance(m, (Linear, LoraLinear)) and name]


def lora_apply(dit: DiT, cfg: LoraConfig, seed: int = 0) -> LoraReport:
    """Wrap every target linear in every block and freeze the base.

    After this call the only trainable DiT parameters are the adapters and
    the new input projections (``patch_embed``, ``pose_proj``).
    """
    known = lora_targets_available(dit)
    unknown = [t for t in cfg.targets if t not in known]
    if unknown:
        raise ConfigError(f"unknown LoRA target(s) {unknown}; available: {known}")
    base_block = block_parameter_count(dit)
    dit.requires_grad_(False)
    for name in NEW_MODULES:
        getattr(dit, name).requires_grad_(True)
    rng = Rng(seed, (0x10FA,))
    report = LoraReport(base_block_params=base_block)
    for i, block in enumerate(dit.blocks):
        for j, target in enumerate(cfg.targets):
            parent, leaf = _resolve(block, target)
            if isinstance(leaf, LoraLinear):
                raise ConfigError(f"blocks.{i}.{target} is already wrapped")
            wrapped = LoraLinear(leaf, cfg.rank, cfg.scale, rng.fork(i, j))
            setattr(parent, target.split(".")[-1], wrapped)
            report.targets.append(TargetCensus(f"blocks.{i}.{target}", leaf.d_in, leaf.d_out, cfg.rank))
    report.block_params = block_parameter_count(dit)
    report.trainable_new_module_params = sum(p.size for m in NEW_MODULES for _, p in getattr(dit, m).named_parameters())
    return report


def lora_merge(dit: DiT) -> int:
    """Fold every adapter into its base weight; returns how many were merged (0 on a second call)."""
    count = 0
    for _, module in list(dit.named_modules()):
        for key, value in list(vars(module).items()):
            if isinstance(value, LoraLinear):
                setattr(module, key, value.merged())
                count += 1
    return count


def is_wrapped(dit: DiT) -> bool:
    return any(isinstance(m, LoraLinear) for _, m in dit.named_modules())
