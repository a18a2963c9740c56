"""Select the kernel implementation at import time.

The compiled extension is used when it was built; otherwise the numpy
kernels take over.  Set ``TENSORSYSID_BACKEND=python`` to force the fallback
or ``=native`` to make a missing extension an import error.
"""
import os

from . import _pykernels

_choice = os.environ.get("TENSORSYSID_BACKEND", "").strip().lower()

try:
    from . import _kernels as _native
except ImportError:
    if _choice == "native":
        raise
    _native = None

if _choice == "python" or _native is None:
    kernels = _pykernels
else:
    kernels = _native

NATIVE_AVAILABLE = _native is not None


def get_kernels(backend=None):
    """Return the kernel module for ``backend`` (``"native"``, ``"python"`` or None)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "native":
        if _native is None:
            raise ImportError("compiled kernels are not built")
        return _native
    raise ValueError(f"unknown backend {backend!r}")


def native_module():
    """The compiled module if it is the active backend, else None."""
    return _native if kernels is _native else None
