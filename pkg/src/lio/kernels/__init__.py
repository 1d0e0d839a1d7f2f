"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``LIO_NUMBA`` is not ``0``.
Both backends expose the same four functions.
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

KERNELS = ("nn_search", "icp_normal_equations", "fill_voxels", "raycast")


def load_backend(name: str):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    return importlib.import_module(f"{__name__}._{name}")


def _select():
    # the bundled TBB is often too old for numba; the workqueue layer needs nothing
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    if os.environ.get("LIO_NUMBA", "1").strip().lower() in ("0", "false", "off", "no"):
        return "numpy", load_backend("numpy")
    try:
        return "numba", load_backend("numba")
    except ImportError:
        log.warning("numba unavailable, using numpy kernels")
        return "numpy", load_backend("numpy")


BACKEND, _impl = _select()

nn_search = _impl.nn_search
icp_normal_equations = _impl.icp_normal_equations
fill_voxels = _impl.fill_voxels
raycast = _impl.raycast
