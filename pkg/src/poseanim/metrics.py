"""Animation quality metrics and the versioned JSON report.

Centroid error compares the oracle's measurement of a generated video with
the true joint trajectory.  Colour error compares generated figure colour
with the oracle's reading of the ground-truth clip after a codec round trip,
which is the best any latent-space model can reproduce (the 8x8 pooling
blends figure and background along the disc edge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import decode, encode
from .config import SampleConfig
from .flow import sample
from .long_video import animate_long, seam_ratio
from .model import make_condition
from .pose import PoseSequence, oracle_measure
from .pose.oracle import centroid_errors, color_errors

REPORT_SCHEMA_VERSION = 1


def animate(model, reference: np.ndarray, poses: PoseSequence, cfg: SampleConfig,
            reference_pose: PoseSequence | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample latents for ``poses`` and decode them; returns ``(latents, video)``."""
    cond = make_condition(reference, poses, reference_pose, sigma=model.config.pose_sigma)
    z = sample(model, cond, cfg)
    return z, decode(z)


@dataclass
class ClipScore:
    name: str
    centroid_px: float
    color: float
    missing_frames: int

    def to_dict(self) -> dict:
        return {"name": self.name, "centroid_error_px": self.centroid_px, "color_error": self.color,
                "missing_frames": self.missing_frames}


def score_video(name: str, video: np.ndarray, truth_xy: np.ndarray, ground_truth: np.ndarray) -> ClipScore:
    measured = oracle_measure(video)
    reference = oracle_measure(decode(encode(ground_truth)))
    cen = centroid_errors(measured, truth_xy)
    col = color_errors(measured, reference)
    return ClipScore(name, float(np.mean(cen)), float(np.mean(col)), sum(m.missing for m in measured))


def pingpong_indices(frames: int, length: int) -> np.ndarray:
    """Indices ``0, 1, ..., frames-1, frames-2, ..., 0, 1, ...`` of the requested length."""
    if frames == 1:
        return np.zeros(length, dtype=int)
    period = 2 * (frames - 1)
    k = np.arange(length) % period
    return np.where(k < frames, k, period - k)


def extended_poses(poses: PoseSequence, length: int) -> PoseSequence:
    return PoseSequence(poses.keypoints[pingpong_indices(poses.frames, length)], poses.canvas)


def long_seam_ratio(model, reference: np.ndarray, poses: PoseSequence, window: int, length: int,
                    cfg: SampleConfig) -> tuple[float, int]:
    cond = make_condition(reference, extended_poses(poses, length), sigma=model.config.pose_sigma)
    res = animate_long(model, cond, window, cfg)
    return seam_ratio(res.latents, res.plan), len(res.plan)


def build_report(model, clips, cfg: SampleConfig, window: int = 5, long_frames: int = 41,
                 max_clips: int | None = None) -> dict:
    """Score ``clips`` (objects with name/video/poses/reference/spec) and the seam ratio on the first one."""
    from .pose import trajectory

    chosen = clips[:max_clips] if max_clips else clips
    scores = []
    for clip in chosen:
        _, video = animate(model, clip.reference, clip.poses, cfg)
        scores.append(score_video(clip.name, video, trajectory(clip.spec), clip.video))
    ratio, windows = long_seam_ratio(model, chosen[0].reference, chosen[0].poses, window, long_frames, cfg)
    width = chosen[0].video.shape[3]
    centroid = float(np.mean([s.centroid_px for s in scores]))
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "sample": {"steps": cfg.steps, "seed": cfg.seed},
        "clips": [s.to_dict() for s in scores],
        "centroid_error_px": centroid,
        "centroid_error_fraction_of_width": centroid / width,
        "color_error": float(np.mean([s.color for s in scores])),
        "seam": {"ratio": ratio, "windows": windows, "window": window, "pose_frames": long_frames},
    }


def rounded(obj, digits: int = 6):
    """Copy of a report with floats rounded, for stable golden files."""
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [rounded(v, digits) for v in obj]
    return obj


def report_table(report: dict) -> str:
    rows = [f"{'clip':<10} {'centroid px':>11} {'colour':>8} {'missing':>7}"]
    for c in report["clips"]:
        rows.append(f"{c['name']:<10} {c['centroid_error_px']:>11.3f} {c['color_error']:>8.4f} "
                    f"{c['missing_frames']:>7}")
    rows.append(f"mean centroid error {report['centroid_error_px']:.3f} px "
                f"({100 * report['centroid_error_fraction_of_width']:.1f}% of width)")
    rows.append(f"mean colour error {report['color_error']:.4f}")
    s = report["seam"]
    rows.append(f"seam ratio {s['ratio']:.3f} over {s['windows']} windows (W={s['window']})")
    return "\n".join(rows)
