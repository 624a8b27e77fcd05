"""Frame files: binary PPM always, PNG/GIF when Pillow is installed."""

from __future__ import annotations

import importlib.util
from pathlib import Path

import numpy as np

from .errors import ValidationError


def to_uint8(image: np.ndarray) -> np.ndarray:
    """``[3, H, W]`` floats in [0, 1] -> ``[H, W, 3]`` bytes (round half to even)."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64).transpose(2, 0, 1) / 255.0


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    px = to_uint8(image)
    h, w, _ = px.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ValidationError(f"PPM header field {data[start:pos]!r} is not an integer") from None
    return tokens, pos + 1


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ValidationError(f"{path}: not a binary PPM (P6) file")
    (w, h, maxval), pos = _ppm_tokens(data, 3)
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    body = data[pos:pos + w * h * 3]
    if len(body) != w * h * 3:
        raise ValidationError(f"{path}: pixel data truncated")
    return from_uint8(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


def have_pillow() -> bool:
    return importlib.util.find_spec("PIL") is not None


def read_image(path: str | Path) -> np.ndarray:
    """Read a reference image as ``[3, H, W]`` in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such image")
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path)
    if not have_pillow():
        raise ValidationError(f"{path}: reading {path.suffix} files needs Pillow (pip install 'artifact[media]')")
    from PIL import Image

    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def write_frames(out_dir: str | Path, video: np.ndarray, fmt: str = "ppm") -> list[Path]:
    """Write each frame of a ``[3, T, H, W]`` video as ``frame_XXXX.<fmt>``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(video.shape[1]):
        p = out_dir / f"frame_{t:04d}.{fmt}"
        if fmt == "ppm":
            write_ppm(p, video[:, t])
        elif fmt == "png":
            _pil_image(video[:, t]).save(p, format="PNG")
        else:
            raise ValidationError(f"unknown frame format {fmt!r} (ppm or png)")
        paths.append(p)
    return paths


def _pil_image(frame: np.ndarray):
    if not have_pillow():
        raise ValidationError("PNG/GIF output needs Pillow (pip install 'artifact[media]')")
    from PIL import Image

    return Image.fromarray(to_uint8(frame))


def write_gif(path: str | Path, video: np.ndarray, frame_ms: int = 80) -> None:
    frames = [_pil_image(video[:, t]) for t in range(video.shape[1])]
    frames[0].save(path, format="GIF", save_all=True, append_images=frames[1:], duration=frame_ms, loop=0)
