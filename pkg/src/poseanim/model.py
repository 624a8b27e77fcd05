"""The full conditional velocity model: pose encoders + DiT (+ optional LoRA)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .codec import SPATIAL_FACTOR, encode_image, temporal_layout
from .conditioning import GivenPrefix, PoseEncoder, RefPoseEncoder, assemble_input
from .config import LoraConfig, ModelConfig
from .dit import DiT
from .errors import DimensionError
from .lora import LoraReport, lora_apply
from .numerics import Module, Rng, Tensor, no_grad
from .pose import PoseSequence, render_pose_maps, render_reference_map

Velocity = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class Condition:
    """Everything a clip is generated from, already in array form.

    Attributes:
        ref_latent: ``[C, h, w]`` encoded reference image.
        ref_pose_map: ``[J, H, W]`` rendered reference pose.
        pose_maps: ``[J, T, H, W]`` rendered driving poses.
        given: optional clean latent prefix.
    """

    ref_latent: np.ndarray
    ref_pose_map: np.ndarray
    pose_maps: np.ndarray
    given: GivenPrefix | None = None

    @property
    def latent_shape(self) -> tuple[int, int, int, int]:
        _, t, h, w = self.pose_maps.shape
        return (self.ref_latent.shape[0], temporal_layout(t), h // SPATIAL_FACTOR, w // SPATIAL_FACTOR)

    def with_given(self, given: GivenPrefix | None) -> Condition:
        return Condition(self.ref_latent, self.ref_pose_map, self.pose_maps, given)

    def validate(self) -> None:
        j, t, h, w = self.pose_maps.shape
        temporal_layout(t)
        if self.ref_pose_map.shape != (j, h, w):
            raise DimensionError(f"reference pose map {list(self.ref_pose_map.shape)} != {[j, h, w]}")
        if self.ref_latent.shape[1:] != (h // SPATIAL_FACTOR, w // SPATIAL_FACTOR):
            raise DimensionError(f"reference latent {list(self.ref_latent.shape)} does not match pose canvas {h}x{w}")


def make_condition(reference: np.ndarray, poses: PoseSequence, reference_pose: PoseSequence | None = None,
                   sigma: float = 2.0, given: GivenPrefix | None = None) -> Condition:
    """Build a :class:`Condition` from a ``[3, H, W]`` image and pose sequences.

    Without an explicit reference pose, the first driving-pose frame is used.
    """
    if reference.shape[1:] != tuple(poses.canvas):
        raise DimensionError(f"reference image {list(reference.shape[1:])} != pose canvas {list(poses.canvas)}")
    ref_pose = reference_pose if reference_pose is not None else poses.frame(0)
    cond = Condition(encode_image(reference), render_reference_map(ref_pose, sigma), render_pose_maps(poses, sigma),
                     given)
    cond.validate()
    return cond


class AnimationModel(Module):
    def __init__(self, cfg: ModelConfig, lora: LoraConfig | None = None):
        self._cfg = cfg
        self._lora = lora
        rng = Rng(cfg.init_seed)
        self.pose_encoder = PoseEncoder(cfg.pose_encoder, cfg.pose_joints, rng.fork(1))
        self.ref_pose_encoder = RefPoseEncoder(cfg.ref_pose_encoder, cfg.pose_joints, cfg.latent_channels,
                                               rng.fork(2))
        self.dit = DiT(cfg, rng.fork(3))
        self._lora_report = lora_apply(self.dit, lora, cfg.init_seed) if lora is not None else None

    @property
    def config(self) -> ModelConfig:
        return self._cfg

    @property
    def lora_config(self) -> LoraConfig | None:
        return self._lora

    @property
    def lora_report(self) -> LoraReport | None:
        return self._lora_report

    def encode_conditions(self, cond: Condition) -> tuple[Tensor, Tensor]:
        return self.pose_encoder(Tensor(cond.pose_maps)), self.ref_pose_encoder(Tensor(cond.ref_pose_map))

    def velocity(self, x_t, t: float, cond: Condition, encoded: tuple[Tensor, Tensor] | None = None) -> Tensor:
        pose_feat, ref_feat = encoded if encoded is not None else self.encode_conditions(cond)
        inp = assemble_input(x_t, cond.ref_latent, ref_feat, cond.given)
        return self.dit(inp, t, pose_feat)

    def bind(self, cond: Condition) -> Velocity:
        """Inference closure ``v(x, t)``; pose encoders run once."""
        with no_grad():
            encoded = self.encode_conditions(cond)

        def v(x: np.ndarray, t: float) -> np.ndarray:
            with no_grad():
                return self.velocity(Tensor(x), t, cond, encoded).data

        return v
