"""Synthetic skeleton-driven clips: a coloured disc following one joint.

Each clip is fully determined by a :class:`SynthSpec`; :func:`random_spec`
draws one from a seed.  Colours are multiples of 1/255 so 8-bit image files
round-trip them exactly.  Two distinct seeds produce the same colour with
probability 1/192**3 (about 1.4e-7); trajectories are continuous draws and
collide with probability zero.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..codec import is_valid_frame_count
from ..errors import ValidationError
from ..numerics import Rng
from .io import PoseSequence

FAMILIES = ("line", "circle", "sine")


@dataclass
class SynthSpec:
    """Recipe for one clip.

    ``params`` by family:

    * line:   ``start=[x, y]``, ``end=[x, y]``
    * circle: ``center=[x, y]``, ``radius``, ``phase``, ``sweep`` (radians covered over the clip)
    * sine:   ``x0``, ``x1``, ``y``, ``amplitude``, ``cycles``, ``phase``
    """

    seed: int
    canvas: tuple[int, int]
    frames: int
    color: tuple[float, float, float]
    family: str
    params: dict = field(default_factory=dict)
    radius: float = 5.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["canvas"] = list(self.canvas)
        d["color"] = list(self.color)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        return cls(seed=int(d["seed"]), canvas=tuple(d["canvas"]), frames=int(d["frames"]),
                   color=tuple(float(c) for c in d["color"]), family=d["family"],
                   params=dict(d["params"]), radius=float(d["radius"]))


@dataclass
class SyntheticClip:
    video: np.ndarray            # [3, T, H, W]
    poses: PoseSequence          # T frames, 1 joint
    reference: np.ndarray        # [3, H, W]
    reference_pose: PoseSequence  # 1 frame
    spec: SynthSpec


def trajectory(spec: SynthSpec) -> np.ndarray:
    """Joint positions ``[T, 2]`` as (x, y)."""
    t = spec.frames
    u = np.arange(t, dtype=np.float64) / (t - 1) if t > 1 else np.zeros(1)
    p = spec.params
    if spec.family == "line":
        start = np.asarray(p["start"], dtype=np.float64)
        end = np.asarray(p["end"], dtype=np.float64)
        return start[None] + (end - start)[None] * u[:, None]
    if spec.family == "circle":
        ang = p["phase"] + p["sweep"] * u
        return np.stack([p["center"][0] + p["radius"] * np.cos(ang),
                         p["center"][1] + p["radius"] * np.sin(ang)], axis=1)
    if spec.family == "sine":
        x = p["x0"] + (p["x1"] - p["x0"]) * u
        y = p["y"] + p["amplitude"] * np.sin(2 * math.pi * p["cycles"] * u + p["phase"])
        return np.stack([x, y], axis=1)
    raise ValidationError(f"unknown trajectory family {spec.family!r}; expected one of {FAMILIES}")


def _check_spec(spec: SynthSpec, path: np.ndarray) -> None:
    h, w = spec.canvas
    if not is_valid_frame_count(spec.frames):
        raise ValidationError(f"frame count {spec.frames} is not of the form 1 + 4k")
    if spec.radius <= 0:
        raise ValidationError("disc radius must be positive")
    if not all(0.0 <= c <= 1.0 for c in spec.color):
        raise ValidationError(f"colour {spec.color} outside [0, 1]")
    r = spec.radius
    lo = path.min(axis=0)
    hi = path.max(axis=0)
    if lo[0] < r or lo[1] < r or hi[0] > w - 1 - r or hi[1] > h - 1 - r:
        raise ValidationError(
            f"trajectory leaves the canvas margin: x in [{lo[0]:.2f}, {hi[0]:.2f}], y in [{lo[1]:.2f}, {hi[1]:.2f}], "
            f"allowed [{r}, {w - 1 - r}] x [{r}, {h - 1 - r}]")


def draw_disc(canvas: tuple[int, int], center, radius: float, color) -> np.ndarray:
    h, w = canvas
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    inside = (jj - center[0]) ** 2 + (ii - center[1]) ** 2 <= radius * radius
    return np.asarray(color, dtype=np.float64)[:, None, None] * inside[None]


def generate_synthetic(spec: SynthSpec) -> SyntheticClip:
    path = trajectory(spec)
    _check_spec(spec, path)
    frames = np.stack([draw_disc(spec.canvas, p, spec.radius, spec.color) for p in path], axis=1)
    kp = np.concatenate([path, np.ones((len(path), 1))], axis=1)[:, None, :]
    poses = PoseSequence(kp, spec.canvas)
    return SyntheticClip(video=frames, poses=poses, reference=frames[:, 0].copy(),
                         reference_pose=poses.frame(0), spec=spec)


def default_radius(canvas: tuple[int, int]) -> float:
    return float(max(2, round(min(canvas) / 6)))


def random_spec(seed: int, canvas: tuple[int, int] = (32, 32), frames: int = 17,
                radius: float | None = None) -> SynthSpec:
    """Draw colour, family and trajectory parameters from ``seed``."""
    rng = Rng(seed)
    h, w = canvas
    r = default_radius(canvas) if radius is None else float(radius)
    xlo, xhi, ylo, yhi = r, w - 1 - r, r, h - 1 - r
    if xhi - xlo < 2 or yhi - ylo < 2:
        raise ValidationError(f"canvas {canvas} too small for radius {r}")
    color = tuple(float(c) / 255.0 for c in rng.integers(64, 256, size=3))
    family = FAMILIES[int(rng.integers(0, len(FAMILIES)))]
    if family == "line":
        params = {"start": [rng.uniform(None, xlo, xhi), rng.uniform(None, ylo, yhi)],
                  "end": [rng.uniform(None, xlo, xhi), rng.uniform(None, ylo, yhi)]}
    elif family == "circle":
        rad = rng.uniform(None, 0.15, 0.45) * min(xhi - xlo, yhi - ylo)
        params = {"center": [rng.uniform(None, xlo + rad, xhi - rad), rng.uniform(None, ylo + rad, yhi - rad)],
                  "radius": rad, "phase": rng.uniform(None, 0.0, 2 * math.pi),
                  "sweep": rng.uniform(None, 0.5, 1.5) * math.pi * (1 if rng.uniform() < 0.5 else -1)}
    else:
        amp = rng.uniform(None, 0.1, 0.4) * (yhi - ylo)
        params = {"x0": rng.uniform(None, xlo, xhi), "x1": rng.uniform(None, xlo, xhi),
                  "y": rng.uniform(None, ylo + amp, yhi - amp), "amplitude": amp,
                  "cycles": rng.uniform(None, 0.5, 1.5), "phase": rng.uniform(None, 0.0, 2 * math.pi)}
    params = {k: (list(map(float, v)) if isinstance(v, list) else float(v)) for k, v in params.items()}
    return SynthSpec(seed=seed, canvas=(h, w), frames=frames, color=color, family=family, params=params, radius=r)


def scaled_spec(spec: SynthSpec, factor: float) -> SynthSpec:
    """Same clip on a canvas ``factor`` times larger (positions and radius scaled)."""
    p = spec.params
    if spec.family == "line":
        params = {"start": [v * factor for v in p["start"]], "end": [v * factor for v in p["end"]]}
    elif spec.family == "circle":
        params = dict(p, center=[v * factor for v in p["center"]], radius=p["radius"] * factor)
    else:
        params = dict(p, x0=p["x0"] * factor, x1=p["x1"] * factor, y=p["y"] * factor,
                      amplitude=p["amplitude"] * factor)
    canvas = (int(round(spec.canvas[0] * factor)), int(round(spec.canvas[1] * factor)))
    return SynthSpec(seed=spec.seed, canvas=canvas, frames=spec.frames, color=spec.color,
                     family=spec.family, params=params, radius=spec.radius * factor)
