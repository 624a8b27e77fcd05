"""Parameter-free latent codec with a first-frame-standalone temporal layout.

Pixel videos are ``[3, T, H, W]`` arrays in ``[0, 1]`` with ``(T - 1) % 4 == 0``
and ``H, W`` multiples of 8.  Latent frame 0 covers pixel frame 0 alone; latent
frame ``j >= 1`` covers pixel frames ``[1 + 4(j-1), 1 + 4j)``.  Spatially each
latent cell is the mean of an 8x8 pixel block.

The full-scale analogue uses 16 latent channels; here channels pass through
unchanged (3 for RGB).  Compression factors are module constants so the
layout can be reconfigured in one place.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .numerics.ops import block_mean, repeat_blocks

TEMPORAL_FACTOR = 4
SPATIAL_FACTOR = 8
FULL_SCALE_LATENT_CHANNELS = 16


def is_valid_frame_count(t: int) -> bool:
    return t >= 1 and (t - 1) % TEMPORAL_FACTOR == 0


def nearest_valid_frame_counts(t: int) -> tuple[int, int]:
    below = max(1, 1 + ((t - 1) // TEMPORAL_FACTOR) * TEMPORAL_FACTOR)
    above = below if below >= t else below + TEMPORAL_FACTOR
    return below, above


def temporal_layout(t: int) -> int:
    """Number of latent frames for ``t`` pixel frames."""
    if not is_valid_frame_count(t):
        lo, hi = nearest_valid_frame_counts(t)
        raise ValidationError(
            f"invalid frame count {t}: need (T-1) % {TEMPORAL_FACTOR} == 0 (nearest valid: {lo} or {hi})")
    return 1 + (t - 1) // TEMPORAL_FACTOR


def pixel_frame_count(t_lat: int) -> int:
    if t_lat < 1:
        raise ValidationError(f"latent frame count must be >= 1, got {t_lat}")
    return 1 + TEMPORAL_FACTOR * (t_lat - 1)


def latent_to_pixel_range(j: int) -> range:
    """Pixel frames covered by latent frame ``j``."""
    if j < 0:
        raise ValidationError("latent index must be non-negative")
    if j == 0:
        return range(0, 1)
    return range(1 + TEMPORAL_FACTOR * (j - 1), 1 + TEMPORAL_FACTOR * j)


def validate_pixel_video(video: np.ndarray) -> None:
    if video.ndim != 4 or video.shape[0] != 3:
        raise ValidationError(f"pixel video must be [3,T,H,W], got {list(video.shape)}")
    _, t, h, w = video.shape
    temporal_layout(t)
    if h % SPATIAL_FACTOR or w % SPATIAL_FACTOR or h == 0 or w == 0:
        raise ValidationError(f"pixel video size {h}x{w} must be a positive multiple of {SPATIAL_FACTOR}")
    if not np.isfinite(video).all() or video.min() < 0.0 or video.max() > 1.0:
        raise ValidationError("pixel values must be finite and in [0, 1]")


def validate_latent(latent: np.ndarray) -> None:
    if latent.ndim != 4 or min(latent.shape) < 1:
        raise ValidationError(f"latent must be [C,T_lat,h,w], got {list(latent.shape)}")
    if not np.isfinite(latent).all():
        raise ValidationError("latent contains non-finite values")


def encode(video: np.ndarray) -> np.ndarray:
    """``[3, T, H, W]`` pixels -> ``[3, 1 + (T-1)/4, H/8, W/8]`` latents."""
    video = np.asarray(video, dtype=np.float64)
    validate_pixel_video(video)
    c, t, h, w = video.shape
    first = block_mean(video[:, :1], (1, SPATIAL_FACTOR, SPATIAL_FACTOR))
    if t == 1:
        return first
    rest = block_mean(video[:, 1:], (TEMPORAL_FACTOR, SPATIAL_FACTOR, SPATIAL_FACTOR))
    return np.concatenate([first, rest], axis=1)


def decode(latent: np.ndarray) -> np.ndarray:
    """Inverse layout: nearest 8x spatial upsample, frame 0 once, later frames x4; clamped to [0, 1]."""
    latent = np.asarray(latent, dtype=np.float64)
    validate_latent(latent)
    first = repeat_blocks(latent[:, :1], (1, SPATIAL_FACTOR, SPATIAL_FACTOR))
    rest = repeat_blocks(latent[:, 1:], (TEMPORAL_FACTOR, SPATIAL_FACTOR, SPATIAL_FACTOR))
    return np.clip(np.concatenate([first, rest], axis=1), 0.0, 1.0)


def encode_image(image: np.ndarray) -> np.ndarray:
    """``[3, H, W]`` image -> ``[3, H/8, W/8]`` latent frame."""
    return encode(np.asarray(image, dtype=np.float64)[:, None])[:, 0]
