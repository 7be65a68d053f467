"""numba-compiled implementations of the hot kernels.

Each function mirrors the one of the same name in ``_numpy``; outputs agree to
rounding.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(xp, kh, kw, stride, oh, ow):
    n, c = xp.shape[0], xp.shape[1]
    out = np.empty((c, kh, kw, n, oh, ow))
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                for b in range(n):
                    for y in range(oh):
                        row = y * stride + i
                        for x in range(ow):
                            out[ch, i, j, b, y, x] = xp[b, ch, row, x * stride + j]
    return out


@njit(cache=True)
def col2im(cols, hp, wp, stride):
    c, kh, kw, n, oh, ow = cols.shape
    out = np.zeros((n, c, hp, wp))
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                for b in range(n):
                    for y in range(oh):
                        row = y * stride + i
                        for x in range(ow):
                            out[b, ch, row, x * stride + j] += cols[ch, i, j, b, y, x]
    return out


@njit(cache=True)
def _taps(o, n):
    src = (o + 0.5) / 2.0 - 0.5
    if src < 0.0:
        src = 0.0
    if src > n - 1.0:
        src = n - 1.0
    i0 = int(math.floor(src))
    i1 = min(i0 + 1, n - 1)
    return i0, i1, src - i0


@njit(cache=True)
def upsample2x(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, 2 * h, 2 * w))
    for oy in range(2 * h):
        y0, y1, fy = _taps(oy, h)
        for ox in range(2 * w):
            x0, x1, fx = _taps(ox, w)
            for b in range(n):
                for ch in range(c):
                    top = (1.0 - fx) * x[b, ch, y0, x0] + fx * x[b, ch, y0, x1]
                    bot = (1.0 - fx) * x[b, ch, y1, x0] + fx * x[b, ch, y1, x1]
                    out[b, ch, oy, ox] = (1.0 - fy) * top + fy * bot
    return out


@njit(cache=True)
def upsample2x_backward(g):
    n, c, h2, w2 = g.shape
    h, w = h2 // 2, w2 // 2
    out = np.zeros((n, c, h, w))
    for oy in range(h2):
        y0, y1, fy = _taps(oy, h)
        for ox in range(w2):
            x0, x1, fx = _taps(ox, w)
            for b in range(n):
                for ch in range(c):
                    v = g[b, ch, oy, ox]
                    out[b, ch, y0, x0] += (1.0 - fy) * (1.0 - fx) * v
                    out[b, ch, y0, x1] += (1.0 - fy) * fx * v
                    out[b, ch, y1, x0] += fy * (1.0 - fx) * v
                    out[b, ch, y1, x1] += fy * fx * v
    return out


@njit(cache=True)
def _soft_coord(v, lo, delta, bins):
    raw = (v - lo) / delta - 0.5
    u = min(max(raw, 0.0), bins - 1.0)
    k0 = min(int(math.floor(u)), bins - 2)
    slope = 1.0 / delta if (raw > 0.0 and raw < bins - 1.0) else 0.0
    return k0, u - k0, slope


@njit(cache=True)
def soft_joint_hist(x, y, lo, hi, bins):
    delta = (hi - lo) / bins
    p = np.zeros((bins, bins))
    for n in range(x.size):
        kx, fx, _ = _soft_coord(x[n], lo, delta, bins)
        ky, fy, _ = _soft_coord(y[n], lo, delta, bins)
        p[kx, ky] += (1.0 - fx) * (1.0 - fy)
        p[kx, ky + 1] += (1.0 - fx) * fy
        p[kx + 1, ky] += fx * (1.0 - fy)
        p[kx + 1, ky + 1] += fx * fy
    return p / x.size


@njit(cache=True)
def soft_joint_hist_backward(x, y, lo, hi, bins, grad):
    delta = (hi - lo) / bins
    gx = np.empty(x.size)
    gy = np.empty(y.size)
    for n in range(x.size):
        kx, fx, sx = _soft_coord(x[n], lo, delta, bins)
        ky, fy, sy = _soft_coord(y[n], lo, delta, bins)
        g00 = grad[kx, ky]
        g01 = grad[kx, ky + 1]
        g10 = grad[kx + 1, ky]
        g11 = grad[kx + 1, ky + 1]
        gx[n] = ((1.0 - fy) * (g10 - g00) + fy * (g11 - g01)) * sx / x.size
        gy[n] = ((1.0 - fx) * (g01 - g00) + fx * (g11 - g10)) * sy / x.size
    return gx, gy


@njit(cache=True)
def hard_joint_hist(x, y, lo, hi, bins):
    delta = (hi - lo) / bins
    counts = np.zeros((bins, bins), dtype=np.int64)
    for n in range(x.size):
        kx = min(max(int(math.floor((x[n] - lo) / delta)), 0), bins - 1)
        ky = min(max(int(math.floor((y[n] - lo) / delta)), 0), bins - 1)
        counts[kx, ky] += 1
    return counts


@njit(cache=True)
def adamw_update(data, grad, m, v, lr, wd, b1, b2, c1, c2, eps):
    d, g, mf, vf = data.ravel(), grad.ravel(), m.ravel(), v.ravel()
    out = np.empty_like(d)
    decay = 1.0 - lr * wd
    for i in range(d.size):
        mf[i] = mf[i] * b1 + (1.0 - b1) * g[i]
        vf[i] = vf[i] * b2 + (1.0 - b2) * g[i] * g[i]
        out[i] = d[i] * decay - lr * (mf[i] / c1) / (np.sqrt(vf[i] / c2) + eps)
    return out.reshape(data.shape)
