"""Backend selection for the time-stepping kernels.

The compiled extension is used when it imports; setting ``SPDE_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("SPDE_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

forward_recursion = _impl.forward_recursion
backward_recursion = _impl.backward_recursion
interval_power_sums = _impl.interval_power_sums


def available_backends() -> dict:
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
