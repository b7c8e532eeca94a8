"""Hot geometry and image kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is selected.  Set ``DRONEMAC_PURE=1`` to force the fallback.
``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("DRONEMAC_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

point_in_polygon = _impl.point_in_polygon
segments_intersect = _impl.segments_intersect
polygons_intersect = _impl.polygons_intersect
is_simple = _impl.is_simple
pixelate = _impl.pixelate

__all__ = [
    "BACKEND",
    "is_simple",
    "pixelate",
    "point_in_polygon",
    "polygons_intersect",
    "segments_intersect",
]
