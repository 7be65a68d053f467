"""Detail feature compensation.

``dem`` sharpens detail through three 1x1 projections, a depthwise 3x3 and a
pointwise restore; ``gem`` runs criss-cross attention twice with shared
projections; ``dfc`` multiplies the two branches.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import Tensor, concat, conv2d, einsum, getitem, mul, parameter, relu, softmax
from .core.nn import Module, uniform_fan_in
from .errors import ShapeError


@dataclass(eq=False)
class DfcParams(Module):
    dem_wq: Tensor
    dem_wk: Tensor
    dem_wv: Tensor
    dem_dw: Tensor
    dem_pw: Tensor
    gem_wq: Tensor
    gem_wk: Tensor
    gem_wv: Tensor
    dem_bq: Tensor
    dem_bk: Tensor
    dem_bv: Tensor
    dem_bdw: Tensor
    dem_bpw: Tensor
    gem_bq: Tensor
    gem_bk: Tensor
    gem_bv: Tensor

    @property
    def channels(self) -> int:
        return self.dem_wq.shape[0]

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator) -> "DfcParams":
        c = channels
        pw = lambda cin, cout: parameter(uniform_fan_in(rng, (cout, cin, 1, 1)))  # noqa: E731
        zeros = lambda n: parameter(np.zeros(n))  # noqa: E731
        return cls(
            dem_wq=pw(c, c), dem_wk=pw(c, c), dem_wv=pw(c, c),
            dem_dw=parameter(uniform_fan_in(rng, (3 * c, 1, 3, 3))),
            dem_pw=pw(3 * c, c),
            gem_wq=pw(c, c), gem_wk=pw(c, c), gem_wv=pw(c, c),
            dem_bq=zeros(c), dem_bk=zeros(c), dem_bv=zeros(c),
            dem_bdw=zeros(3 * c), dem_bpw=zeros(c),
            gem_bq=zeros(c), gem_bk=zeros(c), gem_bv=zeros(c),
        )

    def replace(self, **changes) -> "DfcParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update({k: v if isinstance(v, Tensor) else Tensor(v) for k, v in changes.items()})
        return DfcParams(**vals)


def _check(F, p):
    if F.ndim != 4 or F.shape[1] != p.channels:
        raise ShapeError(f"feature channels (axis 1) {F.shape} do not match DFC channels {p.channels}")


def dem(F: Tensor, p: DfcParams) -> Tensor:
    _check(F, p)
    c = p.channels
    head = concat([conv2d(F, p.dem_wq, p.dem_bq), conv2d(F, p.dem_wk, p.dem_bk), conv2d(F, p.dem_wv, p.dem_bv)], axis=1)
    mid = relu(conv2d(head, p.dem_dw, p.dem_bdw, padding=1, groups=3 * c))
    return conv2d(mid, p.dem_pw, p.dem_bpw)


def cross_index(h: int) -> np.ndarray:
    """(h, h-1) table: row y lists every row index except y."""
    return np.array([[i for i in range(h) if i != y] for y in range(h)], dtype=np.int64).reshape(h, h - 1)


def _column_gather(x: Tensor) -> Tensor:
    """(n, c, h, w) -> (n, c, h, w, h-1): values in the same column, other rows."""
    h, w = x.shape[2], x.shape[3]
    idx = cross_index(h)
    return getitem(x, (slice(None), slice(None), idx[:, None, :], np.arange(w)[None, :, None]))


def cross_attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """Softmax weights of shape (n, h, w, w + h - 1): the first ``w`` entries
    address the row of each position (centre included), the remaining
    ``h - 1`` the rest of its column."""
    row = einsum("nchw,nchv->nhwv", q, k)
    col = einsum("nchw,nchwj->nhwj", q, _column_gather(k))
    return softmax(concat([row, col], axis=-1), axis=-1)


def gem_single(F: Tensor, p: DfcParams) -> Tensor:
    _check(F, p)
    w = F.shape[3]
    q = conv2d(F, p.gem_wq, p.gem_bq)
    k = conv2d(F, p.gem_wk, p.gem_bk)
    v = conv2d(F, p.gem_wv, p.gem_bv)
    att = cross_attention_weights(q, k)
    from_row = einsum("nhwv,nchv->nchw", getitem(att, (Ellipsis, slice(0, w))), v)
    if F.shape[2] == 1:
        return F + from_row
    from_col = einsum("nhwj,nchwj->nchw", getitem(att, (Ellipsis, slice(w, None))), _column_gather(v))
    return F + from_row + from_col


def gem(F: Tensor, p: DfcParams) -> Tensor:
    return gem_single(gem_single(F, p), p)


def dfc(F: Tensor, p: DfcParams) -> Tensor:
    return mul(dem(F, p), gem(F, p))
