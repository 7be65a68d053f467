"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active backend is chosen once at import from the ``BGFD_NUMBA`` environment
variable (see :mod:`bgfd._accel`). Both backends stay importable as
``bgfd.kernels._numpy`` and ``bgfd.kernels._numba`` for cross-checking.
"""
import numpy as np

from .._accel import USE_NUMBA
from . import _numpy

if USE_NUMBA:
    from . import _numba as _impl

    BACKEND = "numba"
else:
    from . import _numpy as _impl

    BACKEND = "numpy"

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "upsample2x",
    "upsample2x_backward",
    "soft_joint_hist",
    "soft_joint_hist_backward",
    "hard_joint_hist",
    "hard_bin_index",
    "adamw_update",
]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def im2col(xp, kh, kw, stride, oh, ow):
    """(n, c, hp, wp) padded input -> (c, kh, kw, n, oh, ow) patch array.

    Channel-major so a grouped convolution is one GEMM per group.
    """
    return _impl.im2col(_f64(xp), int(kh), int(kw), int(stride), int(oh), int(ow))


def col2im(cols, hp, wp, stride):
    """Adjoint of :func:`im2col`: scatter-add (c, kh, kw, n, oh, ow) patches back to (n, c, hp, wp)."""
    return _impl.col2im(_f64(cols), int(hp), int(wp), int(stride))


def upsample2x(x):
    return _impl.upsample2x(_f64(x))


def upsample2x_backward(g):
    return _impl.upsample2x_backward(_f64(g))


def soft_joint_hist(x, y, lo, hi, bins):
    """Joint probability table from triangular (linear) bin assignment."""
    return _impl.soft_joint_hist(_f64(x).ravel(), _f64(y).ravel(), float(lo), float(hi), int(bins))


def soft_joint_hist_backward(x, y, lo, hi, bins, grad):
    return _impl.soft_joint_hist_backward(
        _f64(x).ravel(), _f64(y).ravel(), float(lo), float(hi), int(bins), _f64(grad)
    )


def hard_joint_hist(x, y, lo, hi, bins):
    """Integer joint counts with values outside [lo, hi] clamped to edge bins."""
    return _impl.hard_joint_hist(_f64(x).ravel(), _f64(y).ravel(), float(lo), float(hi), int(bins))


def hard_bin_index(x, lo, hi, bins):
    """Bin index per sample, clamped to ``[0, bins - 1]``."""
    return _numpy.hard_bin_index(_f64(x).ravel(), float(lo), float(hi), int(bins))


def adamw_update(data, grad, m, v, lr, wd, b1, b2, c1, c2, eps):
    """One AdamW step. Updates the moment buffers ``m`` and ``v`` in place
    and returns the new parameter array (``data`` is left untouched)."""
    return _impl.adamw_update(_f64(data), _f64(grad), m, v, float(lr), float(wd), float(b1), float(b2),
                              float(c1), float(c2), float(eps))
