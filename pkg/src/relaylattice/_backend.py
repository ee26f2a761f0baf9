"""Select the compiled core if it was built, else the numpy fallback.

Set ``RELAYLATTICE_BACKEND=python`` to force the fallback.
"""

import os

if os.environ.get("RELAYLATTICE_BACKEND", "").lower() == "python":
    from . import _core_py as core
    BACKEND = "python"
else:
    try:
        from . import _core as core
        BACKEND = "cython"
    except ImportError:
        from . import _core_py as core
        BACKEND = "python"

point_count = core.point_count
green_values = core.green_values
green_sums = core.green_sums
ive_range = core.ive_range

__all__ = ["BACKEND", "core", "point_count", "green_values", "green_sums", "ive_range"]
