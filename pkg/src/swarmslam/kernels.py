"""Backend selection for the hot loops.

The compiled extension is used when it was built; set
``SWARMSLAM_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SWARMSLAM_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels


def nearest_neighbors(p, q, backend=None):
    """Nearest neighbour of each point of ``p`` among ``q``.

    Parameters
    ----------
    p, q : (n, 2) and (m, 2) float arrays
    backend : {"compiled", "python", None}
        ``None`` uses the import-time default.

    Returns
    -------
    idx : (n,) int64, dist2 : (n,) float64 squared distances
    """
    impl = _pick(backend)
    p = np.ascontiguousarray(p, dtype=np.float64).reshape(-1, 2)
    q = np.ascontiguousarray(q, dtype=np.float64).reshape(-1, 2)
    return impl.nearest_neighbors(p, q)


def ray_cast_batch(origins, angles, max_range, walls, backend=None):
    """Distance along each ray to the first wall, ``inf`` when none is in range."""
    impl = _pick(backend)
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 2)
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    max_range = np.ascontiguousarray(
        np.broadcast_to(np.asarray(max_range, dtype=np.float64), angles.shape))
    walls = np.ascontiguousarray(walls, dtype=np.float64).reshape(-1, 4)
    return impl.ray_cast_batch(origins, np.ascontiguousarray(np.cos(angles)),
                               np.ascontiguousarray(np.sin(angles)), max_range, walls)


def available_backends():
    names = ["python"]
    if BACKEND == "compiled" or _has_compiled():
        names.insert(0, "compiled")
    return names


def _has_compiled():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")
