"""Assembly kernel backend selection.

The compiled Cython kernels are preferred when built; the vectorized NumPy
implementations are the fallback.  Override with THINPERM_KERNELS=numpy or
THINPERM_KERNELS=cython (the latter raises if the extension is missing).
"""
import os

from . import numpy_backend

_requested = os.environ.get("THINPERM_KERNELS", "").strip().lower()

if _requested in ("numpy", "python"):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _cykernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "THINPERM_KERNELS=cython requested but the extension is not built; "
                "reinstall with a working C compiler"
            )
        _impl = numpy_backend
        BACKEND = "numpy"

p2_scalar_stiffness = _impl.p2_scalar_stiffness
p2_sym_grad_stiffness = _impl.p2_sym_grad_stiffness
p2_p1_divergence = _impl.p2_p1_divergence


def backend_name():
    return BACKEND


def backends():
    """All importable backends, name -> module (for benchmarks/tests)."""
    out = {"numpy": numpy_backend}
    try:
        from . import _cykernels

        out["cython"] = _cykernels
    except ImportError:
        pass
    return out
