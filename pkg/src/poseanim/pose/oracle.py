"""Figure measurement on pixel videos.

Deliberately independent of the clip generator: it only thresholds
intensities and takes moments, so it can cross-check generated clips.
Pixel centres sit on integer coordinates (x = column, y = row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class FrameMeasurement:
    centroid: tuple[float, float] | None   # (x, y); None when no foreground
    color: tuple[float, float, float] | None

    @property
    def missing(self) -> bool:
        return self.centroid is None


def measure_frame(frame: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> FrameMeasurement:
    """``frame`` is ``[3, H, W]``; intensity is the channel mean."""
    intensity = frame.mean(axis=0)
    mask = intensity > threshold
    if not mask.any():
        return FrameMeasurement(None, None)
    rows, cols = np.nonzero(mask)
    weights = intensity[rows, cols]
    total = weights.sum()
    cx = float((weights * cols).sum() / total)
    cy = float((weights * rows).sum() / total)
    color = frame[:, rows, cols].mean(axis=1)
    return FrameMeasurement((cx, cy), tuple(float(c) for c in color))


def oracle_measure(video: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> list[FrameMeasurement]:
    """Per-frame centroid and mean figure colour of a ``[3, T, H, W]`` video."""
    video = np.asarray(video, dtype=np.float64)
    return [measure_frame(video[:, t], threshold) for t in range(video.shape[1])]


def centroid_errors(measured: list[FrameMeasurement], truth: np.ndarray) -> np.ndarray:
    """Euclidean distance per frame; missing frames count as ``inf``."""
    out = np.empty(len(measured))
    for i, (m, p) in enumerate(zip(measured, truth)):
        out[i] = np.inf if m.missing else float(np.hypot(m.centroid[0] - p[0], m.centroid[1] - p[1]))
    return out


def color_errors(measured: list[FrameMeasurement], reference: list[FrameMeasurement]) -> np.ndarray:
    """Euclidean RGB distance per frame; frames missing on either side count as ``inf``."""
    out = np.empty(len(measured))
    for i, (m, r) in enumerate(zip(measured, reference)):
        if m.missing or r.missing:
            out[i] = np.inf
        else:
            out[i] = float(np.linalg.norm(np.subtract(m.color, r.color)))
    return out
