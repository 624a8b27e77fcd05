"""Binary tensor container used for checkpoints and raw video dumps.

Layout (all integers little-endian u32)::

    b"UADT" | version | config length | config JSON (UTF-8)
    | tensor count | per tensor: name length | name | dtype tag | rank | dims... | float64 payload

The config block is canonical JSON (sorted keys, compact), so two saves of the
same model are byte-identical.  Tensors are written in sorted name order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import LoraConfig, ModelConfig, canonical_json, from_dict, to_dict
from .errors import ValidationError

MAGIC = b"UADT"
VERSION = 1
DTYPE_F64 = 1


class ContainerError(ValidationError):
    pass


def dumps(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = canonical_json(config).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")  # ascontiguousarray would make 0-d arrays 1-d
        raw_name = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw_name)), raw_name, struct.pack("<II", DTYPE_F64, arr.ndim)]
        parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"{self.source}: truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals


def loads(data: bytes, source: str = "<bytes>") -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(data, source)
    if r.take(4) != MAGIC:
        raise ContainerError(f"{source}: not a UADT container (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise ContainerError(f"{source}: unsupported container version {version} (this build reads {VERSION})")
    try:
        config = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{source}: corrupt config block ({exc})") from None
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        dtype, rank = r.u32(2)
        if dtype != DTYPE_F64:
            raise ContainerError(f"{source}: tensor {name!r} has unknown dtype tag {dtype}")
        dims = r.u32(rank) if rank else ()
        dims = (dims,) if isinstance(dims, int) else tuple(dims)
        count = int(np.prod(dims)) if dims else 1
        tensors[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise ContainerError(f"{source}: {len(data) - r.pos} trailing bytes")
    return config, tensors


def save(path: str | Path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(config, tensors))


def load(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise ContainerError(f"{path}: no such file")
    return loads(path.read_bytes(), str(path))


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path: str | Path, model, extra: dict | None = None) -> None:
    """Write model weights with the ModelConfig/LoraConfig that rebuild it."""
    lora = model.lora_config
    config = {"kind": "checkpoint", "model": to_dict(model.config), "lora": to_dict(lora) if lora else None}
    if extra:
        config["extra"] = extra
    save(path, config, {k: v.data for k, v in model.parameters().items()})


def load_checkpoint(path: str | Path):
    from .model import AnimationModel

    config, tensors = load(path)
    if config.get("kind") != "checkpoint":
        raise ContainerError(f"{path}: container does not hold a checkpoint")
    model_cfg = from_dict(ModelConfig, config["model"])
    lora_cfg = from_dict(LoraConfig, config["lora"]) if config.get("lora") is not None else None
    model = AnimationModel(model_cfg, lora_cfg)
    try:
        model.load_arrays(tensors)
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"{path}: {exc}") from None
    return model


def save_video(path: str | Path, video: np.ndarray, meta: dict | None = None) -> None:
    save(path, {"kind": "video", **(meta or {})}, {"video": video})


def load_video(path: str | Path) -> np.ndarray:
    config, tensors = load(path)
    if config.get("kind") != "video" or "video" not in tensors:
        raise ContainerError(f"{path}: container does not hold a video")
    return tensors["video"]
