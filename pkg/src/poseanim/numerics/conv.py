"""3-D and 2-D convolution.

The forward kernel accumulates each output voxel in a fixed order - input
channel, then kernel t, h, w - starting from 0.0 and adding the bias last.
That is the same order as the obvious nested-loop reference, so the two
agree bit for bit (no FMA contraction, no reassociation).  The backward pass
goes through im2col + matmul; it only has to be deterministic, not
order-identical to anything.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numba import njit

from ..errors import DimensionError
from .tensor import Tensor, make_op


@njit(cache=True)
def _conv3d_forward_kernel(xp, wt, bias, st, sh, sw, to, ho, wo):  # pragma: no cover - jitted
    ci_n, kt, kh, kw, co_n = wt.shape
    out = np.empty((co_n, to, ho, wo))
    acc = np.empty(co_n)
    for t in range(to):
        for h in range(ho):
            for w in range(wo):
                for co in range(co_n):
                    acc[co] = 0.0
                for ci in range(ci_n):
                    for a in range(kt):
                        for b in range(kh):
                            for c in range(kw):
                                xv = xp[ci, t * st + a, h * sh + b, w * sw + c]
                                for co in range(co_n):
                                    acc[co] += xv * wt[ci, a, b, c, co]
                for co in range(co_n):
                    out[co, t, h, w] = acc[co] + bias[co]
    return out


def _triple(v, name: str) -> tuple[int, int, int]:
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise DimensionError(f"conv3d: {name} must have 3 entries, got {v}")
    return v


def output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, kernel, stride, out) -> np.ndarray:
    ci = xp.shape[0]
    kt, kh, kw = kernel
    st, sh, sw = stride
    to, ho, wo = out
    cols = np.empty((ci, kt, kh, kw, to, ho, wo))
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                cols[:, a, b, c] = xp[:, a:a + st * (to - 1) + 1:st, b:b + sh * (ho - 1) + 1:sh,
                                      c:c + sw * (wo - 1) + 1:sw]
    return cols


def _col2im(cols: np.ndarray, padded_shape, stride) -> np.ndarray:
    _, kt, kh, kw, to, ho, wo = cols.shape
    st, sh, sw = stride
    gx = np.zeros(padded_shape)
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                gx[:, a:a + st * (to - 1) + 1:st, b:b + sh * (ho - 1) + 1:sh,
                   c:c + sw * (wo - 1) + 1:sw] += cols[:, a, b, c]
    return gx


def _validate(x: Tensor, weight: Tensor, bias: Tensor, stride, padding, op: str):
    if x.ndim != 4:
        raise DimensionError(f"{op}: input must be [C_in,T,H,W], got {list(x.shape)}")
    if weight.ndim != 5:
        raise DimensionError(f"{op}: weight must be [C_out,C_in,kt,kh,kw], got {list(weight.shape)}")
    if weight.shape[1] != x.shape[0]:
        raise DimensionError(f"{op}: input has {x.shape[0]} channels but weight expects {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"{op}: bias shape {list(bias.shape)} != [{weight.shape[0]}]")
    if min(stride) < 1:
        raise DimensionError(f"{op}: strides must be >= 1, got {stride}")
    if min(padding) < 0:
        raise DimensionError(f"{op}: padding must be >= 0, got {padding}")
    out = tuple(output_size(n, k, s, p) for n, k, s, p in zip(x.shape[1:], weight.shape[2:], stride, padding))
    if min(out) <= 0:
        raise DimensionError(
            f"{op}: kernel {list(weight.shape[2:])} does not fit padded input {list(x.shape[1:])} "
            f"(padding {list(padding)}); output would be {list(out)}")
    return out


def _conv3d(x: Tensor, weight: Tensor, bias: Tensor, stride, padding, op: str) -> Tensor:
    out_sz = _validate(x, weight, bias, stride, padding, op)
    pt, ph, pw = padding
    xp = np.pad(x.data, ((0, 0), (pt, pt), (ph, ph), (pw, pw))) if any(padding) else np.ascontiguousarray(x.data)
    wt = np.ascontiguousarray(weight.data.transpose(1, 2, 3, 4, 0))
    out = _conv3d_forward_kernel(xp, wt, np.ascontiguousarray(bias.data), *stride, *out_sz)
    co = weight.shape[0]
    kernel = weight.shape[2:]

    def backward(g):
        g2 = g.reshape(co, -1)
        gx = gw = None
        if weight.requires_grad:
            cols = _im2col(xp, kernel, stride, out_sz).reshape(-1, g2.shape[1])
            gw = (g2 @ cols.T).reshape(weight.shape)
        if x.requires_grad:
            gcols = (weight.data.reshape(co, -1).T @ g2).reshape((x.shape[0], *kernel, *out_sz))
            gpad = _col2im(gcols, xp.shape, stride)
            gx = gpad[:, pt:pt + x.shape[1], ph:ph + x.shape[2], pw:pw + x.shape[3]]
        gb = g2.sum(axis=1) if bias.requires_grad else None
        return gx, gw, gb

    return make_op(out, (x, weight, bias), backward, op)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor,
           stride: int | Sequence[int] = 1, padding: int | Sequence[int] = 0) -> Tensor:
    """Single-sample 3-D convolution.

    Args:
        x: ``[C_in, T, H, W]``.
        weight: ``[C_out, C_in, kt, kh, kw]``.
        bias: ``[C_out]``.
        stride, padding: ints or ``(t, h, w)`` triples; padding is zeros.

    Returns:
        ``[C_out, T', H', W']`` with ``T' = (T + 2 pt - kt) // st + 1`` etc.
    """
    return _conv3d(x, weight, bias, _triple(stride, "stride"), _triple(padding, "padding"), "conv3d")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor,
           stride: int | Sequence[int] = 1, padding: int | Sequence[int] = 0) -> Tensor:
    """2-D analogue of :func:`conv3d` (``x`` is ``[C_in, H, W]``)."""
    from .ops import reshape

    if x.ndim != 3:
        raise DimensionError(f"conv2d: input must be [C_in,H,W], got {list(x.shape)}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: weight must be [C_out,C_in,kh,kw], got {list(weight.shape)}")
    sh, sw = (stride, stride) if isinstance(stride, (int, np.integer)) else tuple(stride)
    ph, pw = (padding, padding) if isinstance(padding, (int, np.integer)) else tuple(padding)
    x3 = reshape(x, (x.shape[0], 1, x.shape[1], x.shape[2]))
    w3 = reshape(weight, (weight.shape[0], weight.shape[1], 1, weight.shape[2], weight.shape[3]))
    out = _conv3d(x3, w3, bias, (1, int(sh), int(sw)), (0, int(ph), int(pw)), "conv2d")
    return reshape(out, (out.shape[0], out.shape[2], out.shape[3]))

