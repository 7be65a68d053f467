"""Pure-numpy implementations of the hot kernels."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, kh, kw, stride, oh, ow):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3))


def col2im(cols, hp, wp, stride):
    c, kh, kw, n, oh, ow = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride] += (
                cols[:, i, j].transpose(1, 0, 2, 3)
            )
    return out


def _upsample_matrix(n):
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = min(max((o + 0.5) / 2.0 - 0.5, 0.0), n - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n - 1)
        f = src - i0
        m[o, i0] += 1.0 - f
        m[o, i1] += f
    return m


def upsample2x(x):
    uh = _upsample_matrix(x.shape[2])
    uw = _upsample_matrix(x.shape[3])
    return np.matmul(np.matmul(uh, x), uw.T)


def upsample2x_backward(g):
    uh = _upsample_matrix(g.shape[2] // 2)
    uw = _upsample_matrix(g.shape[3] // 2)
    return np.matmul(np.matmul(uh.T, g), uw)


def _soft_coords(x, lo, hi, bins):
    delta = (hi - lo) / bins
    raw = (x - lo) / delta - 0.5
    u = np.clip(raw, 0.0, bins - 1.0)
    k0 = np.minimum(np.floor(u), bins - 2).astype(np.int64)
    frac = u - k0
    slope = np.where((raw > 0.0) & (raw < bins - 1.0), 1.0 / delta, 0.0)
    return k0, frac, slope


def soft_joint_hist(x, y, lo, hi, bins):
    kx, fx, _ = _soft_coords(x, lo, hi, bins)
    ky, fy, _ = _soft_coords(y, lo, hi, bins)
    size = bins * bins
    p = np.zeros(size)
    for dx, wx in ((0, 1.0 - fx), (1, fx)):
        for dy, wy in ((0, 1.0 - fy), (1, fy)):
            p += np.bincount((kx + dx) * bins + ky + dy, weights=wx * wy, minlength=size)
    return (p / x.size).reshape(bins, bins)


def soft_joint_hist_backward(x, y, lo, hi, bins, grad):
    kx, fx, sx = _soft_coords(x, lo, hi, bins)
    ky, fy, sy = _soft_coords(y, lo, hi, bins)
    g00 = grad[kx, ky]
    g01 = grad[kx, ky + 1]
    g10 = grad[kx + 1, ky]
    g11 = grad[kx + 1, ky + 1]
    dfx = (1.0 - fy) * (g10 - g00) + fy * (g11 - g01)
    dfy = (1.0 - fx) * (g01 - g00) + fx * (g11 - g10)
    n = x.size
    return dfx * sx / n, dfy * sy / n


def hard_bin_index(x, lo, hi, bins):
    delta = (hi - lo) / bins
    return np.clip(np.floor((x - lo) / delta), 0, bins - 1).astype(np.int64)


def hard_joint_hist(x, y, lo, hi, bins):
    kx = hard_bin_index(x, lo, hi, bins)
    ky = hard_bin_index(y, lo, hi, bins)
    return np.bincount(kx * bins + ky, minlength=bins * bins).reshape(bins, bins)


def adamw_update(data, grad, m, v, lr, wd, b1, b2, c1, c2, eps):
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad * grad
    return data * (1.0 - lr * wd) - lr * (m / c1) / (np.sqrt(v / c2) + eps)
