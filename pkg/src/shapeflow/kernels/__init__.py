"""Hot loops, dispatched to numba when available.

Set ``SHAPEFLOW_NUMBA=0`` before import to force the pure-numpy path. Both
backends expose the same functions; the rest of the package calls them only
through this module.
"""
import os

from . import _numpy as numpy_backend

numba_backend = None
if os.environ.get("SHAPEFLOW_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off"):
    try:
        from . import _numba as numba_backend
    except ImportError:  # numba missing or broken
        numba_backend = None

USE_NUMBA = numba_backend is not None
_active = numba_backend if USE_NUMBA else numpy_backend

trilinear_sample = _active.trilinear_sample
face_cross = _active.face_cross
vertex_normal_sums = _active.vertex_normal_sums
paraboloid_fit = _active.paraboloid_fit
mc_triangles = _active.mc_triangles

rotations_to_z = numpy_backend.rotations_to_z
COND_LIMIT = numpy_backend.COND_LIMIT


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Cap worker threads for the parallel numba kernels; no-op on numpy."""
    if not USE_NUMBA or n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
