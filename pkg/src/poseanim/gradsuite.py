"""Finite-difference suite over every differentiable op and the full model composition.

Each case builds random inputs from ``(seed, case index)`` and reduces the op
output to a scalar with a fixed random weighting, so no gradient coordinate
is trivially symmetric.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from .conditioning import GivenPrefix, PoseEncoder, RefPoseEncoder, assemble_input
from .config import LoraConfig, ModelConfig, PoseEncoderConfig, RefPoseEncoderConfig
from .dit import DiT
from .lora import lora_apply
from .numerics import (Rng, Tensor, add, attention, broadcast_to, concat_channels, conv2d, conv3d, finite_diff_check,
                       gelu, getitem, index_select, layer_norm, linear, mean, mean_pool, mul, nearest_upsample,
                       reshape, sub, transpose)
from .numerics import sum as tsum

TOLERANCE = 1e-4
EPS = 1e-6


def _weighted(out: Tensor, rng: Rng) -> Tensor:
    return tsum(mul(out, Tensor(rng.normal(out.shape))))


def _t(rng: Rng, shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(shape) * scale)


Case = Callable[[Rng], tuple[Callable[..., Tensor], list[Tensor]]]


def _elementwise(fn):
    def case(rng):
        a, b = _t(rng, (3, 4)), _t(rng, (3, 4))
        w = rng.fork(99)
        return (lambda x, y: _weighted(fn(x, y), Rng(w.seed, w.path))), [a, b]
    return case


def _unary(fn, shape):
    def case(rng):
        x = _t(rng, shape)
        w = rng.fork(99)
        return (lambda a: _weighted(fn(a), Rng(w.seed, w.path))), [x]
    return case


def _with_weights(rng: Rng, fn, inputs):
    w = rng.fork(99)
    return (lambda *a: _weighted(fn(*a), Rng(w.seed, w.path))), inputs


def case_conv3d(rng):
    x, wt, b = _t(rng, (2, 4, 5, 5)), _t(rng, (3, 2, 3, 3, 3), 0.3), _t(rng, (3,))
    return _with_weights(rng, lambda a, c, d: conv3d(a, c, d, (2, 1, 2), 1), [x, wt, b])


def case_conv2d(rng):
    x, wt, b = _t(rng, (2, 6, 6)), _t(rng, (3, 2, 3, 3), 0.3), _t(rng, (3,))
    return _with_weights(rng, lambda a, c, d: conv2d(a, c, d, 2, 1), [x, wt, b])


def case_attention(rng):
    q, k, v = _t(rng, (4, 6)), _t(rng, (5, 6)), _t(rng, (5, 6))
    return _with_weights(rng, lambda a, b, c: attention(a, b, c, 2), [q, k, v])


def case_linear(rng):
    x, w, b = _t(rng, (4, 5)), _t(rng, (3, 5)), _t(rng, (3,))
    return _with_weights(rng, linear, [x, w, b])


def case_layer_norm(rng):
    x, g, b = _t(rng, (4, 6)), _t(rng, (6,)), _t(rng, (6,))
    return _with_weights(rng, layer_norm, [x, g, b])


def case_assemble(rng):
    noisy, ref, feat = _t(rng, (2, 3, 2, 2)), _t(rng, (2, 2, 2)), _t(rng, (2, 2, 2))
    given = GivenPrefix(rng.normal((2, 1, 2, 2)))
    return _with_weights(rng, lambda a, b, c: assemble_input(a, b, c, given), [noisy, ref, feat])


def case_pose_encoder(rng):
    cfg = PoseEncoderConfig(3, (3, 4, 2), 3, (2, 2, 1), (2, 2, 2))
    enc = PoseEncoder(cfg, 1, rng.fork(1))
    maps = _t(rng, (1, 5, 8, 8))
    w0 = enc.layers[0].weight
    b2 = enc.layers[2].bias

    def fn(m, w, b):
        enc.layers[0].weight, enc.layers[2].bias = w, b
        return enc(m)
    return _with_weights(rng, fn, [maps, w0, b2])


def case_ref_pose_encoder(rng):
    cfg = RefPoseEncoderConfig(2, (3,), 3, (4, 2))
    enc = RefPoseEncoder(cfg, 1, 2, rng.fork(1))
    ref = _t(rng, (1, 8, 8))
    w1 = enc.layers[1].weight

    def fn(m, w):
        enc.layers[1].weight = w
        return enc(m)
    return _with_weights(rng, fn, [ref, w1])


def tiny_model_config() -> ModelConfig:
    return ModelConfig(token_dim=12, depth=2, heads=2, patch=(1, 2, 2), latent_channels=2, mlp_ratio=2,
                       pose_encoder=PoseEncoderConfig(3, (2, 2, 3), 3, (2, 2, 1), (2, 2, 2)), init_seed=3)


def case_dit(rng):
    """Whole transformer with adapters, differentiated w.r.t. inputs, adapters and new projections."""
    cfg = tiny_model_config()
    dit = DiT(cfg, rng.fork(1))
    lora_apply(dit, LoraConfig(rank=2, alpha=3.0), seed=rng.seed % 2**32)
    for _, p in dit.named_parameters():
        if p.requires_grad and p.size and not p.data.any():
            p.data = rng.normal(p.shape) * 0.3
    x = _t(rng, (cfg.input_channels, 2, 4, 4))
    pose = _t(rng, (cfg.pose_channels, 2, 4, 4))
    blk = dit.blocks[1]
    names = [(blk.attn.q, "lora_A"), (blk.mlp.fc2, "lora_B"), (dit.patch_embed, "weight"), (dit.pose_proj, "bias")]
    params = [getattr(m, n) for m, n in names]

    def fn(a, b, *ps):
        for (m, n), p in zip(names, ps):
            setattr(m, n, p)
        return dit(a, 0.37, b)
    return _with_weights(rng, fn, [x, pose, *params])


def _composite(rng):
    x = _t(rng, (2, 2, 4, 4))
    y = _t(rng, (2, 1, 2, 2))

    def fn(a, b):
        pooled = mean_pool(a, (2, 2))                                   # [2, 2, 2, 2]
        up = nearest_upsample(pooled, (2, 2))
        rest = sub(up, a)
        shuffled = transpose(reshape(rest, (2, 2, 16)), (1, 0, 2))
        picked = index_select(shuffled, 2, [0, 3, 3, 7])
        cat = concat_channels([getitem(a, (slice(None), slice(0, 1), slice(0, 2), slice(0, 2))), b])
        return add(tsum(mul(picked, picked)), mean(mul(broadcast_to(cat, (4, 1, 2, 2)), cat)))
    return fn, [x, y]


CASES: dict[str, Case] = {
    "add": _elementwise(add),
    "sub": _elementwise(sub),
    "mul": _elementwise(mul),
    "gelu": _unary(gelu, (3, 5)),
    "reshape_transpose": _unary(lambda a: transpose(reshape(a, (2, 3, 2)), (2, 0, 1)), (3, 4)),
    "mean_pool": _unary(lambda a: mean_pool(a, (2, 2)), (2, 3, 4, 4)),
    "nearest_upsample": _unary(lambda a: nearest_upsample(a, (2, 2)), (2, 3, 2, 2)),
    "pool_shape_ops": _composite,
    "linear": case_linear,
    "layer_norm": case_layer_norm,
    "attention": case_attention,
    "conv3d": case_conv3d,
    "conv2d": case_conv2d,
    "assemble_input": case_assemble,
    "pose_encoder": case_pose_encoder,
    "ref_pose_encoder": case_ref_pose_encoder,
    "dit_forward": case_dit,
}


@dataclass
class CaseResult:
    name: str
    max_error: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run_suite(seed: int = 0, seeds: int = 20, cases: list[str] | None = None) -> tuple[list[CaseResult], float]:
    """Run every case for ``seeds`` consecutive seeds; returns per-case worst errors and wall time."""
    started = time.perf_counter()
    results = []
    names = cases or list(CASES)
    for ci, name in enumerate(names):
        worst = 0.0
        for s in range(seeds):
            rng = Rng(seed, (ci, s))
            fn, inputs = CASES[name](rng)
            worst = max(worst, finite_diff_check(fn, inputs, eps=EPS, max_coords=24, rng=rng.fork(7)))
        results.append(CaseResult(name, worst, seeds))
    return results, time.perf_counter() - started


def suite_table(results: list[CaseResult]) -> str:
    rows = [f"{'case':<20} {'max rel err':>12}  status"]
    rows += [f"{r.name:<20} {r.max_error:>12.3e}  {'PASS' if r.passed else 'FAIL'}" for r in results]
    return "\n".join(rows)
