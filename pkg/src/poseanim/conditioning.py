"""Conditioning pathways: driving-pose encoder, reference-pose encoder, input assembly.

Driving poses are encoded by a stack of 3-D convolutions whose strides
reproduce the codec's 4x temporal / 8x spatial compression, so the feature
grid lines up with the latent grid and can be added to patch tokens.  The
reference pose goes through 2-D convolutions down to latent resolution and is
summed into the reference-appearance channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import SPATIAL_FACTOR, TEMPORAL_FACTOR, temporal_layout
from .config import PoseEncoderConfig, RefPoseEncoderConfig
from .errors import ConfigError, DimensionError
from .numerics import Module, Rng, Tensor, as_tensor, broadcast_to, concat, concat_channels, conv2d, conv3d, gelu, \
    index_select, reshape
from .numerics.ops import add

FRONT_PAD = TEMPORAL_FACTOR - 1


class ConvLayer(Module):
    def __init__(self, c_in: int, c_out: int, kernel: tuple[int, ...], rng: Rng):
        fan_in = c_in * math.prod(kernel)
        self.weight = Tensor(rng.normal((c_out, c_in, *kernel), 1.0 / math.sqrt(fan_in)), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)


class PoseEncoder(Module):
    """Driving-pose maps ``[J, T, H, W]`` -> features ``[C_pose, T_lat, H/8, W/8]``."""

    def __init__(self, cfg: PoseEncoderConfig, in_channels: int, rng: Rng):
        cfg.check_layout(TEMPORAL_FACTOR, SPATIAL_FACTOR)
        self._cfg = cfg
        k = cfg.kernel
        widths = (in_channels, *cfg.channels)
        self.layers = [ConvLayer(widths[i], widths[i + 1], (k, k, k), rng.fork(i)) for i in range(cfg.num_layers)]

    def __call__(self, maps: Tensor) -> Tensor:
        maps = as_tensor(maps)
        if maps.ndim != 4:
            raise DimensionError(f"pose maps must be [J,T,H,W], got {list(maps.shape)}")
        _, t, h, w = maps.shape
        temporal_layout(t)
        if h % SPATIAL_FACTOR or w % SPATIAL_FACTOR:
            raise DimensionError(f"pose map size {h}x{w} must be a multiple of {SPATIAL_FACTOR}")
        # replicate frame 0 so the padded length is a multiple of the temporal stride product
        x = index_select(maps, 1, [0] * FRONT_PAD + list(range(t)))
        pad = self._cfg.kernel // 2
        last = len(self.layers) - 1
        for i, (layer, st, ss) in enumerate(zip(self.layers, self._cfg.temporal_strides, self._cfg.spatial_strides)):
            x = conv3d(x, layer.weight, layer.bias, (st, ss, ss), pad)
            if i < last:
                x = gelu(x)
        return x


def receptive_field(cfg: PoseEncoderConfig) -> tuple[int, int, int]:
    """(rf_t, rf_h, rf_w) via ``rf += (k - 1) * jump; jump *= stride`` per layer."""
    rf_t = rf_s = 1
    jump_t = jump_s = 1
    for st, ss in zip(cfg.temporal_strides, cfg.spatial_strides):
        rf_t += (cfg.kernel - 1) * jump_t
        rf_s += (cfg.kernel - 1) * jump_s
        jump_t *= st
        jump_s *= ss
    return rf_t, rf_s, rf_s


class RefPoseEncoder(Module):
    """Reference-pose map ``[J, H, W]`` -> ``[C_lat, H/8, W/8]``."""

    def __init__(self, cfg: RefPoseEncoderConfig, in_channels: int, out_channels: int, rng: Rng):
        self._cfg = cfg
        k = cfg.kernel
        widths = (in_channels, *cfg.hidden_channels, out_channels)
        self.layers = [ConvLayer(widths[i], widths[i + 1], (k, k), rng.fork(i)) for i in range(cfg.num_layers)]

    def __call__(self, ref_map: Tensor) -> Tensor:
        x = as_tensor(ref_map)
        if x.ndim != 3:
            raise DimensionError(f"reference pose map must be [J,H,W], got {list(x.shape)}")
        if x.shape[1] % SPATIAL_FACTOR or x.shape[2] % SPATIAL_FACTOR:
            raise DimensionError(f"reference map size {x.shape[1]}x{x.shape[2]} must be a multiple of {SPATIAL_FACTOR}")
        pad = self._cfg.kernel // 2
        last = len(self.layers) - 1
        for i, (layer, s) in enumerate(zip(self.layers, self._cfg.strides)):
            x = conv2d(x, layer.weight, layer.bias, s, pad)
            if i < last:
                x = gelu(x)
        return x


@dataclass
class GivenPrefix:
    """Clean latents ``[C, g, h, w]`` for the first ``g`` latent frames."""

    latents: np.ndarray

    @property
    def length(self) -> int:
        return self.latents.shape[1]


def givenness_mask(t_lat: int, g: int, h: int, w: int) -> np.ndarray:
    mask = np.zeros((1, t_lat, h, w))
    mask[:, :g] = 1.0
    return mask


def assemble_input(noisy, ref_latent, ref_pose_feat, given: GivenPrefix | None = None) -> Tensor:
    """Stack ``[noisy | reference | mask]`` along channels -> ``[2C + 1, T_lat, h, w]``.

    The reference channels are ``ref_latent + ref_pose_feat`` repeated over
    every latent frame.  With a given prefix of length ``g``, the noisy
    channels of frames ``< g`` are replaced by the clean latents and the mask
    is 1 there.
    """
    noisy = as_tensor(noisy)
    ref_latent = as_tensor(ref_latent)
    ref_pose_feat = as_tensor(ref_pose_feat)
    if noisy.ndim != 4:
        raise DimensionError(f"noisy latent must be [C,T,h,w], got {list(noisy.shape)}")
    c, t, h, w = noisy.shape
    if ref_latent.shape != (c, h, w) or ref_pose_feat.shape != (c, h, w):
        raise DimensionError(f"reference latent {list(ref_latent.shape)} / pose feature {list(ref_pose_feat.shape)} "
                             f"must both be {[c, h, w]}")
    g = 0
    if given is not None:
        g = given.length
        if given.latents.shape != (c, g, h, w):
            raise DimensionError(f"given prefix {list(given.latents.shape)} does not match latent {[c, g, h, w]}")
        if g > t:
            raise DimensionError(f"given prefix length {g} exceeds {t} latent frames")
        if g:
            noisy = noisy[:, g:] if g < t else None
            noisy = Tensor(given.latents) if noisy is None else concat([Tensor(given.latents), noisy], axis=1)
    ref = reshape(add(ref_latent, ref_pose_feat), (c, 1, h, w))
    ref = broadcast_to(ref, (c, t, h, w))
    return concat_channels([noisy, ref, Tensor(givenness_mask(t, g, h, w))])


def check_layout_alignment(pose_feat_shape, latent_shape) -> None:
    if tuple(pose_feat_shape[1:]) != tuple(latent_shape[1:]):
        raise ConfigError(f"pose feature grid {list(pose_feat_shape[1:])} != latent grid {list(latent_shape[1:])}")
