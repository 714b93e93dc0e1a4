"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``TUNA_PURE_PYTHON=1`` to
force the fallback. Both backends share the same arithmetic order and return
bit-identical results.
"""
import os

from . import _pykernels

if os.environ.get("TUNA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

xorshift_fill = _impl.xorshift_fill
dot_scores = _impl.dot_scores
scan_topk = _impl.scan_topk
assign_nearest = _impl.assign_nearest


def backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
