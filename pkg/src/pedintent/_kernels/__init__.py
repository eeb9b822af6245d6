"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when importable; set
``PEDINTENT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("PEDINTENT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

sad_block_match = _impl.sad_block_match
solve_dense = _impl.solve_dense


def get_backend(name):
    """Return the kernel namespace for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


__all__ = ["BACKEND", "get_backend", "sad_block_match", "solve_dense"]
