"""Feature dependency facilitation: histogram mutual information, the
mutual-information difference loss, and GAM channel/spatial attention."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .core import Tensor, as_tensor, conv2d, mul, parameter, relu, sigmoid, xlogx
from .core import sum as tsum
from .core.nn import BatchNorm2d, Module, uniform_fan_in
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class HistogramMI:
    """Histogram settings. ``range=None`` takes the joint min/max of the
    samples being compared."""

    bins: int = 32
    range: Optional[Tuple[float, float]] = None
    mode: str = "hard"

    def __post_init__(self):
        if self.bins < 2:
            raise ParameterError(f"bins must be >= 2, got {self.bins}")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ParameterError(f"range must satisfy lo < hi, got {self.range}")
        if self.mode not in ("hard", "soft"):
            raise ParameterError(f"mode must be 'hard' or 'soft', got {self.mode!r}")


def _values(t) -> np.ndarray:
    return (t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)).reshape(-1)


def value_range(cfg: HistogramMI, *samples) -> Tuple[float, float]:
    if cfg.range is not None:
        return cfg.range
    lo = min(float(s.min()) for s in samples)
    hi = max(float(s.max()) for s in samples)
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _entropy_bits(counts: np.ndarray, n: int) -> float:
    # sorted integer counts make the sum independent of table orientation
    c = np.sort(counts[counts > 0].ravel()).astype(np.float64)
    p = c / n
    return float(-(p * np.log2(p)).sum())


def histogram(T, cfg: HistogramMI = HistogramMI()) -> np.ndarray:
    """Hard-binned probability mass; out-of-range samples land in edge bins."""
    x = _values(T)
    if x.size == 0:
        raise ShapeError("histogram needs at least one sample")
    lo, hi = value_range(cfg, x)
    return _counts(x, lo, hi, cfg.bins) / x.size


def _counts(x, lo, hi, bins):
    return np.bincount(kernels.hard_bin_index(x, lo, hi, bins), minlength=bins)


def entropy(T, cfg: HistogramMI = HistogramMI()) -> float:
    """Shannon entropy in bits of the hard histogram of ``T``."""
    x = _values(T)
    if x.size == 0:
        raise ShapeError("entropy needs at least one sample")
    return _entropy_bits(_counts(x, *value_range(cfg, x), cfg.bins), x.size)


def joint_histogram(T1, T2, cfg: HistogramMI = HistogramMI()) -> np.ndarray:
    counts = _joint_counts(T1, T2, cfg)
    return counts / counts.sum()


def _joint_counts(T1, T2, cfg):
    x, y = _values(T1), _values(T2)
    if x.size != y.size:
        raise ShapeError(f"sample sets differ in size: {x.size} vs {y.size}")
    if x.size == 0:
        raise ShapeError("mutual information needs at least one sample")
    lo, hi = value_range(cfg, x, y)
    return kernels.hard_joint_hist(x, y, lo, hi, cfg.bins)


def mutual_information(T1, T2, cfg: HistogramMI = HistogramMI()) -> float:
    """``H(T1) + H(T2) - H(T1, T2)`` in bits from a shared-range joint
    histogram (hard binning)."""
    cj = _joint_counts(T1, T2, cfg)
    n = int(cj.sum())
    h1, h2 = _entropy_bits(cj.sum(axis=1), n), _entropy_bits(cj.sum(axis=0), n)
    return min(h1, h2) + max(h1, h2) - _entropy_bits(cj, n)


def _soft_joint(x: Tensor, y: Tensor, lo: float, hi: float, bins: int) -> Tensor:
    xd, yd = x.data.reshape(-1), y.data.reshape(-1)

    def backward(g):
        gx, gy = kernels.soft_joint_hist_backward(xd, yd, lo, hi, bins, g)
        return gx.reshape(x.shape), gy.reshape(y.shape)

    return Tensor.from_op(kernels.soft_joint_hist(xd, yd, lo, hi, bins), (x, y), backward, "soft_joint_hist")


def soft_mutual_information(T1, T2, cfg: HistogramMI = HistogramMI()) -> Tensor:
    """Differentiable MI estimate (bits) using triangular bin assignment.

    Samples are assigned linearly to the two nearest bin centres; the value
    range is treated as a constant."""
    x, y = as_tensor(T1), as_tensor(T2)
    if x.size != y.size:
        raise ShapeError(f"sample sets differ in size: {x.size} vs {y.size}")
    lo, hi = value_range(cfg, x.data, y.data)
    pj = _soft_joint(x, y, lo, hi, cfg.bins)
    h1 = -tsum(xlogx(tsum(pj, axis=1), base=2.0))
    h2 = -tsum(xlogx(tsum(pj, axis=0), base=2.0))
    h12 = -tsum(xlogx(pj, base=2.0))
    return h1 + h2 - h12


def mi_loss(FA, FB, FA_noisy, FB_noisy, cfg: HistogramMI = HistogramMI(), training: bool = False):
    """Penalty for losing bi-temporal mutual information to noise.

    Returns ``I_former - I_latter`` when noise lowered the MI, else 0. With
    ``training`` the soft estimator is used and a Tensor is returned;
    otherwise a float from hard histograms.
    """
    shapes = {tuple(np.shape(_values(t))) for t in (FA, FB, FA_noisy, FB_noisy)}
    if len(shapes) != 1:
        raise ShapeError(f"mi_loss inputs differ in size: {sorted(shapes)}")
    if training:
        former = soft_mutual_information(FA, FB, cfg)
        latter = soft_mutual_information(FA_noisy, FB_noisy, cfg)
        if latter.item() < former.item():
            return former - latter
        return Tensor(0.0)
    former = mutual_information(FA, FB, cfg)
    latter = mutual_information(FA_noisy, FB_noisy, cfg)
    return former - latter if latter < former else 0.0


@dataclass(eq=False)
class GamParams(Module):
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    conv1_w: Tensor
    conv1_b: Tensor
    bn1: BatchNorm2d
    conv2_w: Tensor
    conv2_b: Tensor
    bn2: BatchNorm2d
    conv3_w: Tensor
    conv3_b: Tensor
    r: int = 4
    raw_gates: bool = False
    kernel: int = field(default=7)

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator, r: int = 4, kernel: int = 7,
             raw_gates: bool = False) -> "GamParams":
        if r < 1 or channels % r:
            raise ParameterError(f"reduction ratio {r} does not divide channel count {channels}")
        c, cr = channels, channels // r
        return cls(
            fc1_w=parameter(uniform_fan_in(rng, (cr, c, 1, 1))), fc1_b=parameter(np.zeros(cr)),
            fc2_w=parameter(uniform_fan_in(rng, (c, cr, 1, 1))), fc2_b=parameter(np.zeros(c)),
            conv1_w=parameter(uniform_fan_in(rng, (cr, c, kernel, kernel))), conv1_b=parameter(np.zeros(cr)),
            bn1=BatchNorm2d(cr),
            conv2_w=parameter(uniform_fan_in(rng, (c, cr, kernel, kernel))), conv2_b=parameter(np.zeros(c)),
            bn2=BatchNorm2d(c),
            conv3_w=parameter(uniform_fan_in(rng, (c, c, 1, 1))), conv3_b=parameter(np.zeros(c)),
            r=r, raw_gates=raw_gates, kernel=kernel,
        )

    @property
    def channels(self) -> int:
        return self.conv3_w.shape[0]


def gam(F: Tensor, p: GamParams, training: bool = True) -> Tensor:
    """Channel gate (per-position MLP), then spatial gate (two 7x7 convs with
    BN), then a 1x1 output conv. Gates pass through a sigmoid unless
    ``p.raw_gates``."""
    if F.ndim != 4 or F.shape[1] != p.channels:
        raise ShapeError(f"gam channels (axis 1): input {F.shape} vs params {p.channels}")
    if F.shape[1] % p.r:
        raise ParameterError(f"reduction ratio {p.r} does not divide {F.shape[1]} channels")
    gate = (lambda t: t) if p.raw_gates else sigmoid
    pad = p.kernel // 2
    mc = conv2d(relu(conv2d(F, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b)
    x = mul(gate(mc), F)
    s = relu(p.bn1(conv2d(x, p.conv1_w, p.conv1_b, padding=pad), training))
    ms = p.bn2(conv2d(s, p.conv2_w, p.conv2_b, padding=pad), training)
    x = mul(gate(ms), x)
    return conv2d(x, p.conv3_w, p.conv3_b)
