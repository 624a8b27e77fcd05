"""Configuration dataclasses with strict dict/JSON round-tripping.

``from_dict`` rejects unknown keys and wrong types; ``canonical_json``
produces sorted-key compact JSON so embedded configs hash reproducibly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError


def _coerce(value, hint, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if dataclasses.is_dataclass(hint):
        return from_dict(hint, value, where)
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(value) != len(args):
                raise ConfigError(f"{where}: expected {len(args)} entries, got {len(value)}")
            return tuple(_coerce(v, a, f"{where}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
        item = args[0] if args else typing.Any
        seq = [_coerce(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
        return tuple(seq) if origin is tuple else seq
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return {str(k): _coerce(v, args[1], f"{where}.{k}") for k, v in value.items()}
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where}: expected a finite number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, where: str | None = None):
    """Build dataclass ``cls`` from ``data``; unknown keys are an error."""
    where = where or cls.__name__
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {k: _coerce(v, hints[k], f"{where}.{k}") for k, v in data.items()}
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return obj


def to_dict(obj) -> dict:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    return plain(obj)


def canonical_json(obj) -> str:
    data = to_dict(obj) if dataclasses.is_dataclass(obj) else obj
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


# -- conditioning ------------------------------------------------------------

@dataclass
class PoseEncoderConfig:
    """3-D conv stack for driving poses; kernels are cubic and 'same'-padded."""

    num_layers: int = 7
    channels: tuple[int, ...] = (16, 32, 32, 64, 64, 64, 64)
    kernel: int = 3
    temporal_strides: tuple[int, ...] = (1, 1, 2, 1, 2, 1, 1)
    spatial_strides: tuple[int, ...] = (2, 1, 2, 1, 2, 1, 1)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.temporal_strides = tuple(self.temporal_strides)
        self.spatial_strides = tuple(self.spatial_strides)
        if self.num_layers < 1:
            raise ConfigError("pose encoder needs at least one layer")
        for name in ("channels", "temporal_strides", "spatial_strides"):
            if len(getattr(self, name)) != self.num_layers:
                raise ConfigError(f"pose encoder: {name} has {len(getattr(self, name))} entries for "
                                  f"{self.num_layers} layers")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("pose encoder kernel must be odd and positive")
        if min(self.channels) < 1 or min(self.temporal_strides) < 1 or min(self.spatial_strides) < 1:
            raise ConfigError("pose encoder channels and strides must be positive")

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    def check_layout(self, temporal: int = 4, spatial: int = 8) -> None:
        """Raise unless the stride products reproduce the latent layout."""
        pt, ps = math.prod(self.temporal_strides), math.prod(self.spatial_strides)
        if pt != temporal or ps != spatial:
            raise ConfigError(f"pose encoder stride products (t={pt}, s={ps}) must equal the latent "
                              f"compression (t={temporal}, s={spatial})")

    def truncated(self, n: int) -> PoseEncoderConfig:
        """First ``n`` layers (for receptive-field analysis; may not satisfy the layout)."""
        return PoseEncoderConfig(n, self.channels[:n], self.kernel, self.temporal_strides[:n],
                                 self.spatial_strides[:n])


@dataclass
class RefPoseEncoderConfig:
    """2-D conv stack for the reference pose; the last layer width is the latent channel count."""

    num_layers: int = 4
    hidden_channels: tuple[int, ...] = (16, 32, 32)
    kernel: int = 3
    strides: tuple[int, ...] = (2, 2, 2, 1)

    def __post_init__(self):
        self.hidden_channels = tuple(self.hidden_channels)
        self.strides = tuple(self.strides)
        if self.num_layers < 1:
            raise ConfigError("reference pose encoder needs at least one layer")
        if len(self.strides) != self.num_layers or len(self.hidden_channels) != self.num_layers - 1:
            raise ConfigError("reference pose encoder: need num_layers strides and num_layers-1 hidden widths")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("reference pose encoder kernel must be odd and positive")
        if math.prod(self.strides) != 8:
            raise ConfigError(f"reference pose encoder stride product {math.prod(self.strides)} must be 8")


# -- model -------------------------------------------------------------------

@dataclass
class ModelConfig:
    token_dim: int = 64
    depth: int = 4
    heads: int = 4
    patch: tuple[int, int, int] = (1, 2, 2)
    latent_channels: int = 3
    mlp_ratio: int = 4
    pose_joints: int = 1
    pose_sigma: float = 2.0
    pose_encoder: PoseEncoderConfig = field(default_factory=PoseEncoderConfig)
    ref_pose_encoder: RefPoseEncoderConfig = field(default_factory=RefPoseEncoderConfig)
    init_seed: int = 0

    def __post_init__(self):
        self.patch = tuple(self.patch)
        if self.token_dim < 1 or self.depth < 0 or self.heads < 1:
            raise ConfigError("token_dim/heads must be positive and depth non-negative")
        if self.token_dim % self.heads:
            raise ConfigError(f"token_dim {self.token_dim} not divisible by heads {self.heads}")
        if len(self.patch) != 3 or min(self.patch) < 1:
            raise ConfigError(f"patch must be three positive ints, got {self.patch}")
        if self.latent_channels < 1 or self.pose_joints < 1 or self.mlp_ratio < 1:
            raise ConfigError("latent_channels, pose_joints and mlp_ratio must be positive")
        if not self.pose_sigma > 0:
            raise ConfigError("pose_sigma must be positive")

    @property
    def pose_channels(self) -> int:
        return self.pose_encoder.out_channels

    @property
    def input_channels(self) -> int:
        """noisy + reference + givenness mask."""
        return 2 * self.latent_channels + 1


LORA_TARGETS = ("attn.q", "attn.k", "attn.v", "attn.out", "mlp.fc1", "mlp.fc2")


@dataclass
class LoraConfig:
    rank: int = 4
    alpha: float = 8.0
    targets: tuple[str, ...] = LORA_TARGETS
    dropout: float = 0.0

    def __post_init__(self):
        self.targets = tuple(self.targets)
        if self.rank < 1:
            raise ConfigError("LoRA rank must be >= 1")
        if not self.targets:
            raise ConfigError("LoRA target set is empty")
        if self.dropout != 0.0:
            raise ConfigError("LoRA dropout is not supported (must be 0)")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


# -- flow matching -------------------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 2e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    given_probs: tuple[float, ...] = (0.5, 0.25, 0.25)
    divergence_factor: float = 10.0
    divergence_patience: int = 100
    log_every: int = 0
    lr_schedule: str = "cosine"   # "constant" or "cosine" (decay to zero over ``steps``)

    def __post_init__(self):
        self.given_probs = tuple(self.given_probs)
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if not self.given_probs or min(self.given_probs) < 0 or abs(sum(self.given_probs) - 1.0) > 1e-12:
            raise ConfigError(f"given_probs must be non-negative and sum to 1, got {self.given_probs}")
        if self.divergence_factor <= 1 or self.divergence_patience < 1:
            raise ConfigError("divergence_factor must exceed 1 and divergence_patience be >= 1")


@dataclass
class SampleConfig:
    steps: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("sampling needs at least one step")


# -- CLI run file ------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything ``poseanim train --config`` needs."""

    dataset: str
    output: str
    model: ModelConfig = field(default_factory=ModelConfig)
    lora: LoraConfig | None = field(default_factory=LoraConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def load_run_config(path) -> RunConfig:
    from pathlib import Path

    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    for key in ("dataset", "output"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")
    return from_dict(RunConfig, doc)
