"""Toy diffusion transformer over patchified latent tokens.

Token order is time-major, then row-major over the spatial patch grid.  Each
token is the flattened ``(C, pt, ph, pw)`` patch projected to ``D`` dims.
Positions use absolute factorized sinusoids, so the same weights run on any
grid divisible by the patch size.

Parameters fall into two groups.  ``patch_embed`` and ``pose_proj`` are new
modules that always train.  Everything else stands in for pretrained base
weights: it is drawn from a fixed seed and frozen once LoRA is applied.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ModelConfig
from .errors import ConfigError, DimensionError, NumericalError
from .numerics import Linear, Module, Rng, Tensor, add, as_tensor, attention, gelu, getitem, layer_norm, mul, \
    reshape, transpose


# -- patch rearrangement ---------------------------------------------------------

def patch_grid(shape, patch) -> tuple[int, int, int]:
    """Token grid ``(T', H', W')`` for a ``[C, T, H, W]`` array."""
    _, t, h, w = shape
    pt, ph, pw = patch
    if t % pt or h % ph or w % pw:
        raise ConfigError(f"latent grid {[t, h, w]} is not divisible by patch {list(patch)}")
    return t // pt, h // ph, w // pw


def patchify(x: Tensor, patch) -> Tensor:
    """``[C, T, H, W]`` -> ``[N, C*pt*ph*pw]`` (pure rearrangement)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"patchify expects [C,T,H,W], got {list(x.shape)}")
    c = x.shape[0]
    tn, hn, wn = patch_grid(x.shape, patch)
    pt, ph, pw = patch
    y = reshape(x, (c, tn, pt, hn, ph, wn, pw))
    y = transpose(y, (1, 3, 5, 0, 2, 4, 6))
    return reshape(y, (tn * hn * wn, c * pt * ph * pw))


def unpatchify(tokens: Tensor, channels: int, grid, patch) -> Tensor:
    """Inverse of :func:`patchify`; ``grid`` is the token grid ``(T', H', W')``."""
    tn, hn, wn = grid
    pt, ph, pw = patch
    if tokens.shape != (tn * hn * wn, channels * pt * ph * pw):
        raise DimensionError(f"unpatchify: tokens {list(tokens.shape)} do not match grid {list(grid)}, "
                             f"{channels} channels, patch {list(patch)}")
    y = reshape(tokens, (tn, hn, wn, channels, pt, ph, pw))
    y = transpose(y, (3, 0, 4, 1, 5, 2, 6))
    return reshape(y, (channels, tn * pt, hn * ph, wn * pw))


# -- encodings -------------------------------------------------------------------

POSITION_BASE = 10000.0


def sinusoid(pos: np.ndarray, dims: int) -> np.ndarray:
    """Interleaved ``(sin, cos)`` pairs; pair ``i`` has frequency ``base^(-i / (dims/2))``."""
    pos = np.asarray(pos, dtype=np.float64)
    half = dims // 2
    freqs = POSITION_BASE ** (-np.arange(half) / half)
    angles = pos[..., None] * freqs
    out = np.empty(pos.shape + (2 * half,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def axis_dims(d: int) -> int:
    """Width of each per-axis block: the largest even number <= d/3."""
    return 2 * (d // 6)


def position_encoding(t_idx: int, h_idx: int, w_idx: int, d: int) -> np.ndarray:
    """Factorized encoding ``[enc(t) | enc(h) | enc(w) | zeros]`` of length ``d``.

    Each axis gets ``2 * floor(d / 6)`` dims; the ``d mod 6`` leftover dims are zero.
    """
    return position_grid_from_indices(np.array([[t_idx, h_idx, w_idx]]), d)[0]


def position_grid_from_indices(idx: np.ndarray, d: int) -> np.ndarray:
    a = axis_dims(d)
    if a == 0:
        raise ConfigError(f"token width {d} is too small for a factorized position encoding (need >= 6)")
    out = np.zeros((idx.shape[0], d))
    for axis in range(3):
        out[:, axis * a:(axis + 1) * a] = sinusoid(idx[:, axis], a)
    return out


def position_grid(grid, d: int) -> np.ndarray:
    """``[N, d]`` encodings in token order for a token grid ``(T', H', W')``."""
    tn, hn, wn = grid
    idx = np.stack(np.meshgrid(np.arange(tn), np.arange(hn), np.arange(wn), indexing="ij"), axis=-1)
    return position_grid_from_indices(idx.reshape(-1, 3), d)


TIMESTEP_SCALE = 1000.0


def timestep_embedding(t: float, d: int) -> np.ndarray:
    return sinusoid(np.array(TIMESTEP_SCALE * float(t)), d)


# -- transformer -----------------------------------------------------------------

class Attention(Module):
    def __init__(self, d: int, heads: int, rng: Rng):
        self._heads = heads
        self.q = Linear(d, d, rng.fork(0))
        self.k = Linear(d, d, rng.fork(1))
        self.v = Linear(d, d, rng.fork(2))
        self.out = Linear(d, d, rng.fork(3))

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(attention(self.q(x), self.k(x), self.v(x), self._heads))


class Mlp(Module):
    def __init__(self, d: int, hidden: int, rng: Rng):
        self.fc1 = Linear(d, hidden, rng.fork(0))
        self.fc2 = Linear(hidden, d, rng.fork(1))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


def _chunk(v: Tensor, i: int, d: int) -> Tensor:
    return getitem(v, slice(i * d, (i + 1) * d))


def modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return add(mul(layer_norm(x), add(scale, 1.0)), shift)


class Block(Module):
    """Adaptive-norm block: ``x += gate * f(norm(x) * (1 + scale) + shift)`` for attention then MLP."""

    def __init__(self, d: int, heads: int, mlp_ratio: int, rng: Rng):
        self._d = d
        self.modulation = Linear(d, 6 * d, rng.fork(0))
        self.attn = Attention(d, heads, rng.fork(1))
        self.mlp = Mlp(d, mlp_ratio * d, rng.fork(2))

    def __call__(self, x: Tensor, c: Tensor) -> Tensor:
        d = self._d
        mod = self.modulation(gelu(c))
        shift1, scale1, gate1, shift2, scale2, gate2 = (_chunk(mod, i, d) for i in range(6))
        x = add(x, mul(self.attn(modulate(x, shift1, scale1)), gate1))
        return add(x, mul(self.mlp(modulate(x, shift2, scale2)), gate2))


class TimeMlp(Module):
    def __init__(self, d: int, rng: Rng):
        self.fc1 = Linear(d, d, rng.fork(0))
        self.fc2 = Linear(d, d, rng.fork(1))

    def __call__(self, t: float, d: int) -> Tensor:
        return self.fc2(gelu(self.fc1(Tensor(timestep_embedding(t, d)))))


class FinalLayer(Module):
    def __init__(self, d: int, out: int, rng: Rng):
        self._d = d
        self.modulation = Linear(d, 2 * d, rng.fork(0))
        self.linear = Linear(d, out, rng.fork(1))

    def __call__(self, x: Tensor, c: Tensor) -> Tensor:
        mod = self.modulation(gelu(c))
        return self.linear(modulate(x, _chunk(mod, 0, self._d), _chunk(mod, 1, self._d)))


NEW_MODULES = ("patch_embed", "pose_proj")


class DiT(Module):
    """Velocity network ``(assembled input, t, pose features) -> [C_lat, T_lat, h, w]``."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        self._cfg = cfg
        d = cfg.token_dim
        patch_vol = math.prod(cfg.patch)
        self.patch_embed = Linear(cfg.input_channels * patch_vol, d, rng.fork(0))
        self.pose_proj = Linear(cfg.pose_channels * patch_vol, d, rng.fork(1))
        self.time_mlp = TimeMlp(d, rng.fork(2))
        self.blocks = [Block(d, cfg.heads, cfg.mlp_ratio, rng.fork(3, i)) for i in range(cfg.depth)]
        self.final = FinalLayer(d, cfg.latent_channels * patch_vol, rng.fork(4))

    def embed(self, x: Tensor, pose_feat: Tensor) -> Tensor:
        """Patch tokens + positions + projected pose tokens."""
        cfg = self._cfg
        x = as_tensor(x)
        if x.shape[0] != cfg.input_channels:
            raise DimensionError(f"DiT expects {cfg.input_channels} input channels, got {x.shape[0]}")
        grid = patch_grid(x.shape, cfg.patch)
        tokens = add(self.patch_embed(patchify(x, cfg.patch)), Tensor(position_grid(grid, cfg.token_dim)))
        return inject_pose_tokens(tokens, pose_feat, self.pose_proj, cfg.patch, x.shape[1:])

    def __call__(self, x: Tensor, t: float, pose_feat: Tensor) -> Tensor:
        cfg = self._cfg
        x = as_tensor(x)
        if not math.isfinite(t):
            raise NumericalError(f"timestep must be finite, got {t}")
        tokens = self.embed(x, pose_feat)
        c = self.time_mlp(t, cfg.token_dim)
        for i, block in enumerate(self.blocks):
            try:
                tokens = block(tokens, c)
            except NumericalError as exc:
                raise NumericalError(f"DiT block {i}: {exc}") from None
        try:
            out = self.final(tokens, c)
        except NumericalError as exc:
            raise NumericalError(f"DiT final layer: {exc}") from None
        return unpatchify(out, cfg.latent_channels, patch_grid(x.shape, cfg.patch), cfg.patch)


def inject_pose_tokens(tokens: Tensor, pose_feat: Tensor, proj: Linear, patch, latent_grid) -> Tensor:
    """Patchify pose features like the latents, project to ``D``, and add token-wise."""
    pose_feat = as_tensor(pose_feat)
    if pose_feat.ndim != 4 or tuple(pose_feat.shape[1:]) != tuple(latent_grid):
        raise DimensionError(f"pose feature grid {list(pose_feat.shape[1:])} != latent grid {list(latent_grid)}")
    pose_tokens = proj(patchify(pose_feat, patch))
    if pose_tokens.shape != tokens.shape:
        raise DimensionError(f"pose tokens {list(pose_tokens.shape)} != tokens {list(tokens.shape)}")
    return add(tokens, pose_tokens)


def block_parameter_count(dit: DiT) -> int:
    """Parameters inside transformer blocks (base weights plus any adapters)."""
    return sum(p.size for name, p in dit.named_parameters() if name.startswith("blocks."))
