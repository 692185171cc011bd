"""Backend selection for the hot loops.

The compiled extension is used when importable. Set ``MSIRL_PURE_PYTHON=1``
to force the numpy fallback.
"""
import importlib.util
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("MSIRL_PURE_PYTHON", "0") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

HAVE_EXTENSION = importlib.util.find_spec(f"{__package__}._ckernels") is not None


def segments_blocked(p, q, walls, backend=None):
    """Return a uint8 mask of segments ``p[i] -> q[i]`` touching any wall."""
    impl = _resolve(backend)
    p = np.ascontiguousarray(p, dtype=np.float64).reshape(-1, 2)
    q = np.ascontiguousarray(q, dtype=np.float64).reshape(-1, 2)
    walls = np.ascontiguousarray(walls, dtype=np.float64).reshape(-1, 4)
    return np.asarray(impl.segments_blocked(p, q, walls), dtype=np.uint8)


def row_cumulative(indptr, data):
    """Per-row cumulative sums of CSR data, restarting at each row."""
    cum = np.empty(len(data), dtype=np.float64)
    for i in range(len(indptr) - 1):
        lo, hi = indptr[i], indptr[i + 1]
        cum[lo:hi] = np.cumsum(data[lo:hi])
    return cum


def sample_path(indptr, indices, cum, start, uniforms, backend=None):
    """Sample a state path of ``len(uniforms)`` steps from ``start``."""
    impl = _resolve(backend)
    return np.asarray(impl.sample_path(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(cum, dtype=np.float64),
        int(start),
        np.ascontiguousarray(uniforms, dtype=np.float64),
    ))


def _resolve(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
