"""Synthetic dataset on disk.

Layout::

    DIR/manifest.json
    DIR/clip_000/video.uadt      raw [3, T, H, W] float64 dump
    DIR/clip_000/poses.json      driving poses (pose JSON schema)
    DIR/clip_000/reference.ppm   reference image (frame 0)
    DIR/clip_000/spec.json       SynthSpec record

Every clip is cross-checked with the oracle before it is written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import encode, temporal_layout
from .container import load_video, save_video
from .errors import ValidationError
from .flow import TrainingExample
from .media import read_ppm, write_ppm
from .model import make_condition
from .numerics import Rng
from .pose import SynthSpec, generate_synthetic, load_pose_sequence, oracle_measure, random_spec, \
    save_pose_sequence, trajectory
from .pose.oracle import centroid_errors
from .pose.synth import SyntheticClip

DATASET_VERSION = 1
ORACLE_TOLERANCE_PX = 0.5


def clip_seed(seed: int, index: int) -> int:
    return Rng(seed, (0xDA7A, index)).derive_seed()


def check_with_oracle(clip: SyntheticClip) -> float:
    """Max per-frame oracle centroid error against the SynthSpec trajectory; raises above tolerance."""
    err = centroid_errors(oracle_measure(clip.video), trajectory(clip.spec))
    worst = float(err.max())
    if not worst < ORACLE_TOLERANCE_PX:
        raise ValidationError(f"clip seed {clip.spec.seed}: oracle centroid error {worst:.3f} px "
                              f">= {ORACLE_TOLERANCE_PX} px")
    return worst


def write_clip(clip_dir: Path, clip: SyntheticClip) -> None:
    clip_dir.mkdir(parents=True, exist_ok=True)
    save_video(clip_dir / "video.uadt", clip.video, {"seed": clip.spec.seed})
    save_pose_sequence(clip.poses, clip_dir / "poses.json")
    write_ppm(clip_dir / "reference.ppm", clip.reference)
    (clip_dir / "spec.json").write_text(json.dumps(clip.spec.to_dict(), sort_keys=True, indent=1) + "\n",
                                        encoding="utf-8")


def generate_dataset(out: str | Path, clips: int, seed: int, size: tuple[int, int] = (32, 32),
                     frames: int = 17) -> dict:
    temporal_layout(frames)
    if clips < 1:
        raise ValidationError("need at least one clip")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    worst = 0.0
    for i in range(clips):
        clip = generate_synthetic(random_spec(clip_seed(seed, i), size, frames))
        worst = max(worst, check_with_oracle(clip))
        name = f"clip_{i:03d}"
        write_clip(out / name, clip)
        names.append(name)
    manifest = {"version": DATASET_VERSION, "seed": seed, "size": list(size), "frames": frames, "clips": names}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return {"clips": clips, "max_oracle_error_px": worst}


@dataclass
class StoredClip:
    name: str
    video: np.ndarray
    poses: object
    reference: np.ndarray
    spec: SynthSpec


def load_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise ValidationError(f"{root}: no manifest.json (not a dataset directory)")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("version") != DATASET_VERSION:
        raise ValidationError(f"{path}: unsupported dataset version {manifest.get('version')}")
    return manifest


def load_dataset(root: str | Path) -> list[StoredClip]:
    root = Path(root)
    out = []
    for name in load_manifest(root)["clips"]:
        d = root / name
        spec = SynthSpec.from_dict(json.loads((d / "spec.json").read_text(encoding="utf-8")))
        out.append(StoredClip(name, load_video(d / "video.uadt"), load_pose_sequence(d / "poses.json"),
                              read_ppm(d / "reference.ppm"), spec))
    if not out:
        raise ValidationError(f"{root}: dataset has no clips")
    return out


def training_examples(clips: list[StoredClip], sigma: float = 2.0) -> list[TrainingExample]:
    return [TrainingExample(encode(c.video), make_condition(c.reference, c.poses, sigma=sigma)) for c in clips]
