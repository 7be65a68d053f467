"""Differentiable operations over :class:`~bgfd.core.tensor.Tensor`.

All functions are pure: inputs are never written to. Gradients are produced
in float64 and unbroadcast back to each input's shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import ParameterError, ShapeError
from .tensor import Tensor, as_tensor


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return Tensor.from_op(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return Tensor.from_op(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def xlogx(x: Tensor, base: float = np.e) -> Tensor:
    """Elementwise x·log(x) with the 0·log 0 = 0 convention; gradient is
    taken as 0 where x = 0."""
    pos = x.data > 0
    safe = np.where(pos, x.data, 1.0)
    scale = 1.0 / np.log(base)
    out = np.where(pos, x.data * np.log(safe), 0.0) * scale
    return Tensor.from_op(out, (x,), lambda g: (g * np.where(pos, np.log(safe) + 1.0, 0.0) * scale,), "xlogx")


# --- reductions and shape ------------------------------------------------------
def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return Tensor.from_op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x: Tensor, index) -> Tensor:
    basic = _is_basic(index)

    def backward(g):
        out = np.zeros_like(x.data)
        if basic:  # a basic index never repeats an element
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return Tensor.from_op(x.data[index], (x,), backward, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor.from_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum. Every index of an operand must appear in the
    output or in the other operand."""
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_s = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s, other in ((sa, sb + out_s), (sb, sa + out_s)):
        if any(ch not in other for ch in s):
            raise ShapeError(f"einsum index in {s!r} is summed away locally: {subscripts}")

    def backward(g):
        return (
            np.einsum(f"{out_s},{sb}->{sa}", g, b.data),
            np.einsum(f"{out_s},{sa}->{sb}", g, a.data),
        )

    return Tensor.from_op(np.einsum(subscripts, a.data, b.data), (a, b), backward, "einsum")


# --- softmax and losses --------------------------------------------------------
def _check_axis(x, axis):
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for tensor of rank {x.ndim}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, "softmax")


softmax_axis = softmax


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean pixelwise cross-entropy. ``logits`` is (n, k, h, w), ``target`` is
    an integer array (n, h, w) of class indices."""
    target = np.asarray(target)
    if logits.ndim != 4 or target.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs target {target.shape}")
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, target[:, None].astype(np.int64), 1.0, axis=1)
    npix = target.size
    logp = log_softmax(logits, axis=1)
    return mul(sum(mul(logp, onehot)), -1.0 / npix)


# --- convolution -----------------------------------------------------------
def _live_taps(k, size, pad, out, stride):
    """Half-open range of kernel taps that touch real input for some output."""
    if stride != 1:
        return 0, k
    lo = max(0, pad - (out - 1))
    hi = min(k, pad + size)
    return (lo, hi) if hi > lo else (0, k)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """2-D cross-correlation on (n, c, h, w) input with (cout, cin/groups, kh, kw)
    weights. ``groups == c`` with one input channel per group is depthwise."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4, got rank {x.ndim}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4, got rank {weight.ndim}")
    n, c, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if groups < 1 or c % groups:
        raise ShapeError(f"input channels (axis 1) = {c} not divisible by groups = {groups}")
    if cin_g != c // groups:
        raise ShapeError(f"weight axis 1 = {cin_g}, expected in_channels/groups = {c // groups}")
    if cout % groups:
        raise ShapeError(f"weight axis 0 = {cout} not divisible by groups = {groups}")
    if bias is not None and as_tensor(bias).shape != (cout,):
        raise ShapeError(f"bias axis 0 = {as_tensor(bias).shape}, expected ({cout},)")
    if stride < 1 or padding < 0:
        raise ParameterError("stride must be >= 1 and padding >= 0")
    hp, wp = h + 2 * padding, w + 2 * padding
    oh, ow = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp} (axes 2, 3)")

    # taps that only ever read padding contribute nothing; drop them
    rows, cols_ = _live_taps(kh, h, padding, oh, stride), _live_taps(kw, w, padding, ow, stride)
    wfull = weight.data
    wd = wfull[:, :, rows[0]: rows[1], cols_[0]: cols_[1]]
    kh2, kw2 = wd.shape[2], wd.shape[3]
    pt, pl = padding - rows[0], padding - cols_[0]
    pb = max(0, (oh - 1) * stride + kh2 - h - pt)
    pr = max(0, (ow - 1) * stride + kw2 - w - pl)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x.data
    hp2, wp2 = xp.shape[2], xp.shape[3]
    patches = kernels.im2col(xp, kh2, kw2, stride, oh, ow)
    cout_g = cout // groups
    kdim = cin_g * kh2 * kw2
    colm = patches.reshape(groups, kdim, n * oh * ow)
    wm = np.ascontiguousarray(wd).reshape(groups, cout_g, kdim)
    out = np.matmul(wm, colm).reshape(cout, n, oh, ow).transpose(1, 0, 2, 3)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    else:
        out = np.ascontiguousarray(out)

    def backward(g):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(groups, cout_g, n * oh * ow)
        gwd = np.matmul(gm, np.swapaxes(colm, -1, -2)).reshape(wd.shape)
        if gwd.shape == wfull.shape:
            gw = gwd
        else:
            gw = np.zeros_like(wfull)
            gw[:, :, rows[0]: rows[1], cols_[0]: cols_[1]] = gwd
        gx = None
        if x.requires_grad:
            gcols = np.matmul(np.swapaxes(wm, -1, -2), gm).reshape(c, kh2, kw2, n, oh, ow)
            gxp = kernels.col2im(gcols, hp2, wp2, stride)
            gx = gxp[:, :, pt: pt + h, pl: pl + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return Tensor.from_op(out, parents, backward, "conv2d")


# --- normalization -----------------------------------------------------------
@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels), momentum)


def batch_norm(x: Tensor, gamma, beta, training: bool = True, eps: float = 1e-5,
               running: Optional[RunningStats] = None) -> Tensor:
    """Per-channel batch normalization of (n, c, h, w) input.

    In training mode the batch statistics are used and ``running`` (when
    given) is updated in place with the unbiased variance. In eval mode
    ``running`` is required.
    """
    if eps <= 0:
        raise ParameterError(f"batch_norm eps must be > 0, got {eps}")
    gamma, beta = as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta shape {gamma.shape}/{beta.shape} != channel count ({c},)")
    axes = (0, 2, 3)
    m = x.data.size // c
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running is not None:
            unbiased = var * m / max(m - 1, 1)
            running.mean = (1 - running.momentum) * running.mean + running.momentum * mu
            running.var = (1 - running.momentum) * running.var + running.momentum * unbiased
    else:
        if running is None:
            raise ParameterError("batch_norm in eval mode needs running statistics")
        mu, var = running.mean, running.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data[None, :, None, None]
        if training:
            gx = (inv[None, :, None, None] / m) * (
                m * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * inv[None, :, None, None]
        return gx, gg, gb

    return Tensor.from_op(out, (x, gamma, beta), backward, "batch_norm")


# --- resampling -----------------------------------------------------------
def bilinear_upsample_x2(x: Tensor) -> Tensor:
    """Half-pixel-centre bilinear 2x upsampling of (n, c, h, w)."""
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"bilinear_upsample_x2 needs (n, c, h>=1, w>=1), got {x.shape}")
    return Tensor.from_op(
        kernels.upsample2x(x.data), (x,), lambda g: (kernels.upsample2x_backward(g),), "upsample2x"
    )


def upsample_to(x: Tensor, size) -> Tensor:
    """Repeated 2x upsampling until spatial dims equal ``size``."""
    h, w = size
    while x.shape[2] < h:
        x = bilinear_upsample_x2(x)
    if x.shape[2:] != (h, w):
        raise ShapeError(f"cannot reach {size} from {x.shape[2:]} by 2x steps")
    return x
