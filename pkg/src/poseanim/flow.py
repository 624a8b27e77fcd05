"""Rectified-flow objective, Euler sampler and training loop.

Convention: ``x_t = (1 - t) x0 + t * noise`` so ``t = 0`` is data and ``t = 1``
is noise; the network predicts the constant velocity ``noise - x0`` and the
sampler integrates from ``t = 1`` down to ``t = 0``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .conditioning import GivenPrefix
from .config import SampleConfig, TrainConfig
from .errors import DimensionError, NumericalError, ValidationError
from .model import Condition, Velocity
from .numerics import AdamState, Module, Rng, Tensor, adamw_step, getitem, mean, mul, no_grad, sub


class VelocityModel(Protocol):
    def velocity(self, x_t, t: float, cond: Condition) -> Tensor: ...

    def bind(self, cond: Condition) -> Velocity: ...


def interpolate(x0: np.ndarray, noise: np.ndarray, t: float) -> np.ndarray:
    if t == 0.0:
        return np.array(x0, dtype=np.float64)
    if t == 1.0:
        return np.array(noise, dtype=np.float64)
    return (1.0 - t) * x0 + t * noise


def target_velocity(x0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    return noise - x0


def fm_loss(model: VelocityModel, x0: np.ndarray, cond: Condition, t: float, noise: np.ndarray) -> Tensor:
    """Mean squared velocity error over the frames that are not given."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    if noise.shape != x0.shape:
        raise DimensionError(f"noise {list(noise.shape)} != x0 {list(x0.shape)}")
    g = cond.given.length if cond.given is not None else 0
    if g >= x0.shape[1]:
        raise ValidationError(f"given prefix ({g}) leaves no frames to supervise out of {x0.shape[1]}")
    v = model.velocity(Tensor(interpolate(x0, noise, t)), t, cond)
    diff = sub(v, Tensor(target_velocity(x0, noise)))
    if g:
        diff = getitem(diff, (slice(None), slice(g, None)))
    loss = mean(mul(diff, diff))
    if not np.isfinite(loss.data):
        raise NumericalError(f"non-finite loss at t={t}")
    return loss


def sample(model: VelocityModel | Velocity, cond: Condition, cfg: SampleConfig,
           shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Euler-integrate the learned flow from ``t = 1`` to ``t = 0``.

    Frames covered by ``cond.given`` are reset to their clean latents after
    every step (and before the first), so they come out bitwise unchanged.
    """
    v = model if callable(model) and not hasattr(model, "bind") else model.bind(cond)
    shape = tuple(shape) if shape is not None else cond.latent_shape
    x = Rng(cfg.seed).normal(shape)
    given = cond.given
    g = given.length if given is not None else 0
    if g:
        x[:, :g] = given.latents
    dt = 1.0 / cfg.steps
    for i in range(cfg.steps):
        t = 1.0 - i * dt
        step = v(x, t)
        if not np.isfinite(step).all():
            raise NumericalError(f"non-finite velocity at sampler step {i} (t={t:.4f})")
        x = x - dt * step
        if g:
            x[:, :g] = given.latents
    return x


# -- training ----------------------------------------------------------------

@dataclass
class TrainingExample:
    x0: np.ndarray        # [C, T_lat, h, w]
    cond: Condition       # given is ignored; training draws its own prefix


@dataclass
class Draw:
    """Random quantities for one batch element."""

    t: float
    noise: np.ndarray
    given: int


def draw_for(rng: Rng, shape, given_probs: Sequence[float]) -> Draw:
    t = float(rng.uniform())
    noise = rng.normal(shape)
    g = rng.choice(len(given_probs), given_probs)
    return Draw(t, noise, g)


def with_prefix(ex: TrainingExample, g: int) -> Condition:
    return ex.cond.with_given(GivenPrefix(ex.x0[:, :g].copy()) if g else None)


PROBE_TIMES = (0.1, 0.3, 0.5, 0.7, 0.9)


def probe_loss(model: VelocityModel, examples: Sequence[TrainingExample], seed: int) -> float:
    """Loss on a fixed set of (clip, t, noise) probes with no given prefix.

    Unlike per-step minibatch losses this is a deterministic function of the
    parameters, so it is what the overfit check compares.
    """
    total = 0.0
    n = 0
    with no_grad():
        for i, ex in enumerate(examples):
            for k, t in enumerate(PROBE_TIMES):
                noise = Rng(seed, (0x9B0E, i, k)).normal(ex.x0.shape)
                total += fm_loss(model, ex.x0, ex.cond.with_given(None), t, noise).item()
                n += 1
    return total / n


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    probe_initial: float = float("nan")
    probe_final: float = float("nan")
    seconds: float = 0.0
    steps: int = 0


def learning_rate(cfg: TrainConfig, step: int) -> float:
    if cfg.lr_schedule == "constant" or cfg.steps <= 1:
        return cfg.lr
    return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * step / cfg.steps))


def train(model: Module, examples: Sequence[TrainingExample], cfg: TrainConfig,
          loss_csv: str | Path | None = None, log: Callable[[str], None] | None = None) -> TrainResult:
    """AdamW on the flow loss; batches cycle through ``examples`` in order.

    Batch element ``i`` of step ``s`` uses clip ``(s * batch + i) % n`` and its
    own random stream ``(seed, s, i)``, so the run is reproducible and
    independent of evaluation order.  Raises :class:`NumericalError` if the
    loss stays above ``divergence_factor`` times the first loss for
    ``divergence_patience`` consecutive steps.
    """
    if not examples:
        raise ValidationError("training needs at least one clip")
    params = model.trainable()
    state = AdamState()
    result = TrainResult()
    started = time.perf_counter()
    result.probe_initial = probe_loss(model, examples, cfg.seed)
    over = 0
    first = None
    n = len(examples)
    for step in range(cfg.steps):
        model.zero_grad()
        batch_loss = 0.0
        for i in range(cfg.batch_size):
            ex = examples[(step * cfg.batch_size + i) % n]
            d = draw_for(Rng(cfg.seed, (step, i)), ex.x0.shape, cfg.given_probs)
            g = min(d.given, ex.x0.shape[1] - 1)  # always leave at least one frame to supervise
            loss = fm_loss(model, ex.x0, with_prefix(ex, g), d.t, d.noise)
            loss.backward(np.full((), 1.0 / cfg.batch_size))
            batch_loss += loss.item()
        batch_loss /= cfg.batch_size
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
        adamw_step(params, grads, state, learning_rate(cfg, step), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
        result.losses.append(batch_loss)
        first = batch_loss if first is None else first
        over = over + 1 if batch_loss > cfg.divergence_factor * first else 0
        if over >= cfg.divergence_patience:
            raise NumericalError(f"training diverged: loss above {cfg.divergence_factor}x the initial "
                                 f"{first:.4g} for {over} consecutive steps (step {step})")
        if log is not None and cfg.log_every and (step + 1) % cfg.log_every == 0:
            log(f"step {step + 1}/{cfg.steps} loss {batch_loss:.5f}")
    model.zero_grad()
    result.steps = cfg.steps
    result.probe_final = probe_loss(model, examples, cfg.seed)
    result.seconds = time.perf_counter() - started
    if loss_csv is not None:
        write_loss_csv(result.losses, loss_csv)
    return result


def write_loss_csv(losses: Sequence[float], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])
