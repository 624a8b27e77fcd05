"""Pose ingestion, heatmap rendering, synthetic data and the measurement oracle."""

from .io import PoseSequence, load_pose_sequence, pose_from_dict, save_pose_sequence
from .oracle import FrameMeasurement, centroid_errors, color_errors, oracle_measure
from .render import DEFAULT_SIGMA, render_pose_maps, render_reference_map
from .synth import SynthSpec, SyntheticClip, generate_synthetic, random_spec, scaled_spec, trajectory

__all__ = [
    "DEFAULT_SIGMA", "FrameMeasurement", "PoseSequence", "SynthSpec", "SyntheticClip", "centroid_errors",
    "color_errors", "generate_synthetic", "load_pose_sequence", "oracle_measure", "pose_from_dict",
    "random_spec", "render_pose_maps", "render_reference_map", "save_pose_sequence", "scaled_spec",
    "trajectory",
]
