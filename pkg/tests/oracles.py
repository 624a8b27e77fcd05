"""Slow, obviously-correct reference computations used as test oracles.

Nothing here imports the package's numeric kernels.
"""

import math

import numpy as np


def conv3d_naive(x, weight, bias, stride, padding):
    """Nested-loop convolution over a zero-padded input; accumulates in
    (c_in, kt, kh, kw) order from 0.0 and adds the bias last."""
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    co_n, ci_n, kt, kh, kw = weight.shape
    to = (x.shape[1] + 2 * pt - kt) // st + 1
    ho = (x.shape[2] + 2 * ph - kh) // sh + 1
    wo = (x.shape[3] + 2 * pw - kw) // sw + 1
    out = np.empty((co_n, to, ho, wo))
    for co in range(co_n):
        for t in range(to):
            for h in range(ho):
                for w in range(wo):
                    acc = 0.0
                    for ci in range(ci_n):
                        for a in range(kt):
                            for b in range(kh):
                                for c in range(kw):
                                    acc += float(xp[ci, t * st + a, h * sh + b, w * sw + c]) * float(weight[co, ci, a, b, c])
                    out[co, t, h, w] = acc + float(bias[co])
    return out


def conv_output_size(n, k, s, p):
    """Count valid window placements by enumeration rather than formula."""
    return sum(1 for start in range(-p, n + p) if (start + p) % s == 0 and start + k <= n + p)


def attention_loops(q, k, v, heads):
    n, d = q.shape
    dh = d // heads
    out = np.zeros((n, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(n):
            scores = [float(np.dot(q[i, sl], k[j, sl])) / math.sqrt(dh) for j in range(k.shape[0])]
            m = max(scores)
            w = [math.exp(s - m) for s in scores]
            z = sum(w)
            for j in range(k.shape[0]):
                out[i, sl] += (w[j] / z) * v[j, sl]
    return out


def receptive_field_by_probe(strides, kernel=3):
    """Receptive field of a 1-D conv stack measured by explicit index tracing:
    collect every input index reachable from output index 0."""
    reach = {0}
    for s in reversed(strides):
        pad = kernel // 2
        reach = {o * s + a - pad for o in reach for a in range(kernel)}
    return max(reach) - min(reach) + 1


def windows_by_simulation(L, W, d):
    """Step a cursor along the timeline, emitting windows per the stated rules."""
    if L <= W:
        return [(0, 0, 0, L)]
    out = [(0, 0, 0, W)]
    emitted_end = W
    s = 0
    while emitted_end < L:
        s = s + (W - d)
        if s + W > L:
            s = L - W
        g = emitted_end - s
        out.append((s, g, emitted_end, s + W))
        emitted_end = s + W
    return out
