"""Basis-evaluation kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imported cleanly; set
``KANZIP_BACKEND=numpy`` to force the fallback (useful for benchmarking
and for debugging the extension).
"""
import os

from . import numpy_backend

_backend = None
if os.environ.get("KANZIP_BACKEND", "").lower() not in ("numpy", "python"):
    try:
        from . import _ckern as _backend
    except ImportError:
        _backend = None
if _backend is None:
    _backend = numpy_backend

bspline_basis = _backend.bspline_basis
rbf_basis = _backend.rbf_basis
gram_basis = _backend.gram_basis


def backend_name():
    return _backend.NAME
