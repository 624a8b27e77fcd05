"""Gaussian heatmap rendering of keypoints."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .io import PoseSequence

DEFAULT_SIGMA = 2.0


def render_pose_maps(seq: PoseSequence, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Render ``[J, T, H, W]`` maps, one Gaussian bump per visible joint.

    Pixel ``(row i, col j)`` gets ``exp(-((j - x)^2 + (i - y)^2) / (2 sigma^2))``;
    joints with confidence 0 give an all-zero map.  The bump is not
    renormalised, so it reaches exactly 1 only when the joint sits on a pixel
    centre.
    """
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    h, w = seq.canvas
    kp = seq.keypoints.transpose(1, 0, 2)  # [J, T, 3]
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    dx = cols[None, None, None, :] - kp[..., 0, None, None]
    dy = rows[None, None, :, None] - kp[..., 1, None, None]
    maps = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    visible = (kp[..., 2] > 0)[..., None, None]
    return np.where(visible, maps, 0.0)


def render_reference_map(seq: PoseSequence, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Single-frame ``[J, H, W]`` map from the first frame of ``seq``."""
    return render_pose_maps(seq.frame(0), sigma)[:, 0]
