"""Central finite-difference verification of analytic gradients."""
import numpy as np

from ..errors import NumericError, ParameterError
from .tensor import Tensor


def finite_difference_check(f, x, step: float = 1e-5) -> float:
    """Largest ``|g_analytic - g_numeric| / max(1, |g_numeric|)`` over all
    coordinates of ``x``, where ``f`` maps a Tensor to a scalar Tensor."""
    if step <= 0:
        raise ParameterError(f"step must be > 0, got {step}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(base.copy(), requires_grad=True)
    out = f(leaf)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("f(x) is not finite")
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)

    numeric = np.empty_like(base)
    flat = numeric.reshape(-1)
    probe = base.copy()
    pflat = probe.reshape(-1)
    for k in range(pflat.size):
        orig = pflat[k]
        pflat[k] = orig + step
        fp = float(np.sum(f(Tensor(probe.copy())).data))
        pflat[k] = orig - step
        fm = float(np.sum(f(Tensor(probe.copy())).data))
        pflat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"f is not finite at coordinate {k} +/- {step}")
        flat[k] = (fp - fm) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
