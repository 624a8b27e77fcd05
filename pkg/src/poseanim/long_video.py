"""Overlapped sliding windows over the latent timeline.

Every window after the first starts ``d`` latent frames before the end of
what has already been produced.  Those ``d`` frames are handed back to the
model as a given prefix (mask channel = 1, held fixed while sampling) and are
not emitted again.  When the last stride would run past the end, the final
window is shifted left so it still has the full length; its context then
covers everything it overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import TEMPORAL_FACTOR, decode, pixel_frame_count, temporal_layout
from .conditioning import GivenPrefix
from .config import SampleConfig
from .errors import ConfigError, ValidationError
from .flow import VelocityModel, sample
from .model import Condition
from .numerics import Rng


@dataclass(frozen=True)
class Window:
    start: int
    length: int
    context: int

    @property
    def end(self) -> int:
        return self.start + self.length

    @property
    def emit(self) -> tuple[int, int]:
        return self.start + self.context, self.end

    @property
    def pixel_span(self) -> tuple[int, int]:
        """Pixel frames whose poses drive this window (window latent 0 sits on pixel ``4 * start``)."""
        first = TEMPORAL_FACTOR * self.start
        return first, first + pixel_frame_count(self.length)


def plan_windows(total: int, window: int, discard: int = 2) -> list[Window]:
    if window <= discard:
        raise ConfigError(f"window length {window} must exceed the discard/context length {discard}")
    if discard < 0:
        raise ConfigError("discard length must be non-negative")
    if total < 1:
        raise ConfigError(f"need at least one latent frame, got {total}")
    if total <= window:
        return [Window(0, total, 0)]
    plan = [Window(0, window, 0)]
    while plan[-1].end < total:
        start = plan[-1].end - discard
        if start + window > total:
            start = total - window
        plan.append(Window(start, window, plan[-1].end - start))
    return plan


def expected_window_count(total: int, window: int, discard: int = 2) -> int:
    if total <= window:
        return 1
    return math.ceil((total - window) / (window - discard)) + 1


def check_partition(plan: list[Window], total: int) -> None:
    pos = 0
    for w in plan:
        lo, hi = w.emit
        if lo != pos or hi <= lo:
            raise AssertionError(f"emit range {w.emit} does not continue from {pos}")
        pos = hi
    if pos != total:
        raise AssertionError(f"emit ranges end at {pos}, expected {total}")


def plan_table(plan: list[Window]) -> str:
    rows = [f"{'window':>6} {'start':>5} {'context':>7} {'emit':>9}"]
    for i, w in enumerate(plan):
        lo, hi = w.emit
        rows.append(f"{i:>6} {w.start:>5} {w.context:>7} {f'[{lo},{hi})':>9}")
    return "\n".join(rows)


def window_seed(seed: int, index: int) -> int:
    """Window 0 uses ``seed`` itself, so a one-window plan reproduces :func:`sample`."""
    return seed if index == 0 else Rng(seed, (0x51DE, index)).derive_seed()


@dataclass
class LongResult:
    latents: np.ndarray
    video: np.ndarray
    plan: list[Window]


def animate_long(model: VelocityModel, cond: Condition, window: int, cfg: SampleConfig,
                 discard: int = 2) -> LongResult:
    """Generate the full pose sequence window by window and decode it."""
    j, t_pix, h, w = cond.pose_maps.shape
    total = temporal_layout(t_pix)
    plan = plan_windows(total, window, discard)
    c = cond.ref_latent.shape[0]
    out = np.zeros((c, total, h // 8, w // 8))
    for i, win in enumerate(plan):
        p0, p1 = win.pixel_span
        if p1 > t_pix:
            raise ValidationError(f"window {i} needs pose frames [{p0},{p1}) but only {t_pix} are available")
        given = GivenPrefix(out[:, win.start:win.start + win.context].copy()) if win.context else None
        wcond = Condition(cond.ref_latent, cond.ref_pose_map, cond.pose_maps[:, p0:p1], given)
        z = sample(model, wcond, SampleConfig(cfg.steps, window_seed(cfg.seed, i)))
        lo, hi = win.emit
        out[:, lo:hi] = z[:, lo - win.start:]
    return LongResult(out, decode(out), plan)


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a * a)))


def seam_ratio(latents: np.ndarray, plan: list[Window]) -> float:
    """Mean adjacent-frame RMS across window seams over the median RMS of all other adjacent pairs.

    A seam is the pair (``e - 1``, ``e``) where ``e`` is the first emitted
    frame of a window after the first.
    """
    seams = {w.emit[0] for w in plan[1:]}
    if not seams:
        raise ValidationError("seam ratio needs at least two windows")
    across = [_rms(latents[:, e] - latents[:, e - 1]) for e in sorted(seams)]
    within = [_rms(latents[:, k] - latents[:, k - 1]) for k in range(1, latents.shape[1]) if k not in seams]
    if not within:
        raise ValidationError("no within-window frame pairs to compare against")
    med = float(np.median(within))
    if med == 0.0:
        return math.inf if max(across) > 0 else 1.0
    return float(np.mean(across)) / med
