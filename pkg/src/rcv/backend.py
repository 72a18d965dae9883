"""Selects the compiled kernels when available, else the numpy fallback.

Set ``RCV_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

NAME = "python"
kernels = _fallback

if os.environ.get("RCV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # noqa: F811
        NAME = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        kernels = _fallback

__all__ = ["NAME", "kernels"]
