"""Differentiable operations on :class:`Tensor`.

Broadcasting is limited to what numpy does for ``add``/``sub``/``mul``; the
gradient of a broadcast operand is summed back to its own shape.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erf

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, make_op

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LAYER_NORM_EPS = 1e-5


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} do not broadcast") from None


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(a.data * b.data, (a, b), backward, "mul")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return make_op(x.data * cdf, (x,), backward, "gelu")


# -- reductions --------------------------------------------------------------

def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_op(np.asarray(x.data.sum()), (x,), backward, "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        return (np.full(x.shape, float(g) / n),)

    return make_op(np.asarray(x.data.mean()), (x,), backward, "mean")


# -- shape manipulation ------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {list(x.shape)} as {list(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return make_op(out, (x,), backward, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return make_op(np.ascontiguousarray(x.data.transpose(axes)), (x,), backward, "transpose")


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing only, so the backward scatter is collision free."""
    parts = index if isinstance(index, tuple) else (index,)
    if any(not isinstance(p, (int, slice, type(Ellipsis), np.integer)) for p in parts):
        raise TypeError("Tensor indexing supports ints, slices and Ellipsis only")

    def backward(g):
        full = np.zeros(x.shape)
        full[index] = g
        return (full,)

    return make_op(np.array(x.data[index]), (x,), backward, "getitem")


def index_select(x: Tensor, axis: int, indices: Sequence[int]) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in the backward pass."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise DimensionError(f"index_select: index out of range for axis of size {x.shape[axis]}")

    def backward(g):
        full = np.zeros(x.shape)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return make_op(np.take(x.data, idx, axis=axis), (x,), backward, "index_select")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    ref = list(xs[0].shape)
    for t in xs[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, other)) if i != axis % len(ref)):
            raise DimensionError(f"concat: shapes {ref} and {other} differ off axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op(np.concatenate([t.data for t in xs], axis=axis), tuple(xs), backward, "concat")


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the leading (channel) axis."""
    return concat(xs, axis=0)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"broadcast_to: {list(x.shape)} -> {list(shape)} is not a broadcast") from None

    def backward(g):
        return (_unbroadcast(g, x.shape),)

    return make_op(out, (x,), backward, "broadcast_to")


# -- pooling -----------------------------------------------------------------

def halving_sum(a: np.ndarray, axis: int) -> np.ndarray:
    """Sum ``axis`` by repeated pairwise halving (keeps the axis with size 1).

    For power-of-two extents the tree is balanced, so summing identical values
    is exact: the mean of a block of copies of ``v`` returns exactly ``v``.
    """
    n = a.shape[axis]
    while n > 1 and n % 2 == 0:
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[axis] = slice(0, n, 2)
        hi[axis] = slice(1, n, 2)
        a = a[tuple(lo)] + a[tuple(hi)]
        n //= 2
    if n > 1:
        a = a.sum(axis=axis, keepdims=True)
    return a


def block_mean(a: np.ndarray, factors: Sequence[int]) -> np.ndarray:
    """Mean over non-overlapping blocks on the trailing ``len(factors)`` axes."""
    k = len(factors)
    lead = a.shape[: a.ndim - k]
    split = list(lead)
    for n, f in zip(a.shape[a.ndim - k:], factors):
        if f < 1 or n % f:
            raise DimensionError(f"block_mean: extent {n} not divisible by factor {f}")
        split += [n // f, f]
    out = a.reshape(split)
    for i in range(k):
        out = halving_sum(out, len(lead) + 2 * i + 1)
    out = out.reshape([s for j, s in enumerate(split) if j < len(lead) or (j - len(lead)) % 2 == 0])
    return out / float(np.prod(factors))


def repeat_blocks(a: np.ndarray, factors: Sequence[int]) -> np.ndarray:
    k = len(factors)
    for i, f in enumerate(factors):
        a = np.repeat(a, f, axis=a.ndim - k + i)
    return a


def mean_pool(x: Tensor, factors: Sequence[int]) -> Tensor:
    """Average pooling with stride == window over the trailing axes."""
    factors = tuple(int(f) for f in factors)
    count = float(np.prod(factors))

    def backward(g):
        return (repeat_blocks(g, factors) / count,)

    return make_op(block_mean(x.data, factors), (x,), backward, "mean_pool")


def nearest_upsample(x: Tensor, factors: Sequence[int]) -> Tensor:
    factors = tuple(int(f) for f in factors)

    def backward(g):
        k = len(factors)
        split = list(g.shape[: g.ndim - k])
        for n, f in zip(g.shape[g.ndim - k:], factors):
            split += [n // f, f]
        lead = g.ndim - k
        red = tuple(lead + 2 * i + 1 for i in range(k))
        return (g.reshape(split).sum(axis=red),)

    return make_op(repeat_blocks(x.data, factors), (x,), backward, "nearest_upsample")


# -- dense layers ------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape ``[d_out, d_in]``."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {list(x.shape)} incompatible with weight {list(weight.shape)}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"linear: bias {list(bias.shape)} != [{weight.shape[0]}]")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gx = (g @ weight.data) if x.requires_grad else None
        gw = (g2.T @ x2) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_op(out, parents, backward, "linear")


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = [x] + [p for p in (gamma, beta) if p is not None]

    def backward(g):
        dxhat = g * gamma.data if gamma is not None else g
        gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).reshape(-1, d).sum(axis=0))
        if beta is not None:
            grads.append(g.reshape(-1, d).sum(axis=0))
        return grads

    return make_op(out, parents, backward, "layer_norm")


def _split_heads(a: np.ndarray, heads: int) -> np.ndarray:
    n, d = a.shape
    return a.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _check_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> None:
    if heads < 1 or q.shape[-1] % heads:
        raise ConfigError(f"attention: width {q.shape[-1]} not divisible by {heads} heads")
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise DimensionError("attention expects 2-D q, k, v")
    if k.shape != v.shape or q.shape[1] != k.shape[1]:
        raise DimensionError(f"attention: q {list(q.shape)}, k {list(k.shape)}, v {list(v.shape)} mismatch")


def _softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(q: Tensor, k: Tensor, heads: int) -> np.ndarray:
    """Softmax weights ``[heads, N, M]`` (no gradient); exposed for inspection."""
    _check_attention(q, k, k, heads)
    scale = 1.0 / math.sqrt(q.shape[1] // heads)
    return _softmax(_split_heads(q.data, heads) @ _split_heads(k.data, heads).transpose(0, 2, 1) * scale)


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention; softmax over the ``M`` keys."""
    _check_attention(q, k, v, heads)
    n, d = q.shape
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    qh, kh, vh = (_split_heads(a.data, heads) for a in (q, k, v))
    p = _softmax(qh @ kh.transpose(0, 2, 1) * scale)
    out = (p @ vh).transpose(1, 0, 2).reshape(n, d)

    def backward(g):
        gh = _split_heads(g, heads)
        gv = p.transpose(0, 2, 1) @ gh
        gp = gh @ vh.transpose(0, 2, 1)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale
        gq = gs @ kh
        gk = gs.transpose(0, 2, 1) @ qh

        def merge(a):
            return a.transpose(1, 0, 2).reshape(a.shape[1], d)

        return merge(gq), merge(gk), merge(gv)

    return make_op(out, (q, k, v), backward, "attention")
