"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled extension is preferred when present; set POISONLAB_PURE_PYTHON=1
to force the fallback. ``BACKEND`` names whichever implementation is active.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("POISONLAB_PURE_PYTHON") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

power_iteration = _impl.power_iteration
nearest_centroids = _impl.nearest_centroids

__all__ = ["BACKEND", "power_iteration", "nearest_centroids"]
