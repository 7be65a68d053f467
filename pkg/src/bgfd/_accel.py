"""Backend switch for the hot kernels.

Set ``BGFD_NUMBA=0`` to force the pure-numpy path. When the variable is unset
the numba path is used if numba imports.
"""
import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

_flag = os.environ.get("BGFD_NUMBA", "1").strip().lower()
USE_NUMBA = HAS_NUMBA and _flag not in ("0", "false", "no", "off")
