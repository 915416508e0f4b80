"""Hot search kernels with a numba backend and a pure-numpy fallback.

The backend is picked once at import: numba when it is importable, unless
``TWOFISH_SPA_NO_NUMBA`` is set to a non-empty value other than ``0``.
Both backends take ``uint8`` byte arrays and ``int64`` Hamming targets.
"""

import os

from . import _numpy

_disabled = os.environ.get("TWOFISH_SPA_NO_NUMBA", "") not in ("", "0")

if _disabled:
    _impl = _numpy
else:
    try:
        from . import _numba as _impl
    except ImportError:  # numba missing
        _impl = _numpy

BACKEND = "numpy" if _impl is _numpy else "numba"

exact_search = _impl.exact_search
objective_scan = _impl.objective_scan
lms_solve = _impl.lms_solve


def get_backend(name):
    """Return the kernel module for ``"numpy"`` or ``"numba"``."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown backend {name!r}")


__all__ = ["BACKEND", "exact_search", "objective_scan", "lms_solve", "get_backend"]
