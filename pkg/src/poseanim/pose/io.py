"""Versioned JSON pose files.

Schema (version 1)::

    {"version": 1,
     "canvas": [H, W],
     "joints": J,
     "frames": [ [[x, y, c], ... J entries], ... T entries ]}

``x`` is the column and ``y`` the row, both in pixel units with pixel
centres on integer coordinates; ``c`` is a confidence in ``[0, 1]`` where 0
marks a missing joint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError

POSE_FORMAT_VERSION = 1
MAX_JOINTS = 18


@dataclass
class PoseSequence:
    """Keypoints ``[T, J, 3]`` (x, y, confidence) on an ``(H, W)`` canvas."""

    keypoints: np.ndarray
    canvas: tuple[int, int]

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        self.canvas = (int(self.canvas[0]), int(self.canvas[1]))
        validate_keypoints(self.keypoints, self.canvas)

    @property
    def frames(self) -> int:
        return self.keypoints.shape[0]

    @property
    def joints(self) -> int:
        return self.keypoints.shape[1]

    def slice(self, start: int, stop: int) -> PoseSequence:
        return PoseSequence(self.keypoints[start:stop].copy(), self.canvas)

    def frame(self, t: int) -> PoseSequence:
        return self.slice(t, t + 1)

    def to_dict(self) -> dict:
        return {
            "version": POSE_FORMAT_VERSION,
            "canvas": list(self.canvas),
            "joints": self.joints,
            "frames": self.keypoints.tolist(),
        }


def validate_keypoints(kp: np.ndarray, canvas: tuple[int, int]) -> None:
    h, w = canvas
    if h < 1 or w < 1:
        raise ValidationError(f"canvas must be positive, got {canvas}")
    if kp.ndim != 3 or kp.shape[2] != 3:
        raise ValidationError(f"keypoints must be [T, J, 3], got {list(kp.shape)}")
    if kp.shape[0] < 1:
        raise ValidationError("pose sequence needs at least one frame")
    if not 1 <= kp.shape[1] <= MAX_JOINTS:
        raise ValidationError(f"joint count {kp.shape[1]} outside 1..{MAX_JOINTS}")
    limits = (("x", w, False), ("y", h, False), ("confidence", 1, True))
    for k, (field, hi, closed) in enumerate(limits):
        v = kp[..., k]
        bad = ~np.isfinite(v) | (v < 0) | ((v > hi) if closed else (v >= hi))
        if bad.any():
            t, j = (int(i[0]) for i in np.nonzero(bad))
            bracket = "]" if closed else ")"
            raise ValidationError(f"frames[{t}][{j}]: {field} {float(kp[t, j, k])} outside [0, {hi}{bracket}")


def pose_from_dict(doc) -> PoseSequence:
    if not isinstance(doc, dict):
        raise ValidationError("pose file: top level must be an object")
    for key in ("version", "canvas", "joints", "frames"):
        if key not in doc:
            raise ValidationError(f"pose file: missing field {key!r}")
    unknown = sorted(set(doc) - {"version", "canvas", "joints", "frames"})
    if unknown:
        raise ValidationError(f"pose file: unknown field(s) {unknown}")
    if doc["version"] != POSE_FORMAT_VERSION:
        raise ValidationError(f"pose file: unsupported version {doc['version']!r}")
    canvas = doc["canvas"]
    if not (isinstance(canvas, list) and len(canvas) == 2 and all(isinstance(v, int) for v in canvas)):
        raise ValidationError("pose file: field 'canvas' must be [H, W] integers")
    joints = doc["joints"]
    frames = doc["frames"]
    if not isinstance(joints, int) or not isinstance(frames, list):
        raise ValidationError("pose file: 'joints' must be an integer and 'frames' a list")
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != joints:
            raise ValidationError(f"pose file: frames[{t}] must list {joints} joints")
        for j, point in enumerate(frame):
            if (not isinstance(point, list) or len(point) != 3
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in point)):
                raise ValidationError(f"pose file: frames[{t}][{j}] must be [x, y, confidence] numbers")
    if not frames:
        raise ValidationError("pose file: 'frames' is empty")
    return PoseSequence(np.array(frames, dtype=np.float64), (canvas[0], canvas[1]))


def load_pose_sequence(path: str | Path) -> PoseSequence:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"pose file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return pose_from_dict(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_pose_sequence(seq: PoseSequence, path: str | Path) -> None:
    Path(path).write_text(json.dumps(seq.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")
