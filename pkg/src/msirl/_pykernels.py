"""Numpy implementations of the compiled kernels.

Used when the extension is not built or when ``MSIRL_PURE_PYTHON=1``.
The floating point operations are the same as in ``_ckernels.pyx`` so
both backends return identical results.
"""
import numpy as np

_CHUNK = 1 << 14


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, cx, cy):
    return ((cx >= np.minimum(ax, bx)) & (cx <= np.maximum(ax, bx))
            & (cy >= np.minimum(ay, by)) & (cy <= np.maximum(ay, by)))


def segments_blocked(p, q, walls):
    """Flag each segment ``p[i] -> q[i]`` that touches any wall segment.

    Args:
        p: (N, 2) segment start points.
        q: (N, 2) segment end points.
        walls: (W, 4) rows ``x1, y1, x2, y2``.

    Returns:
        (N,) uint8 array, 1 where the segment is blocked.
    """
    p = np.ascontiguousarray(p, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    walls = np.ascontiguousarray(walls, dtype=float)
    out = np.zeros(len(p), dtype=np.uint8)
    if len(walls) == 0 or len(p) == 0:
        return out
    ax, ay, bx, by = (walls[:, k][None, :] for k in range(4))
    for lo in range(0, len(p), _CHUNK):
        px = p[lo:lo + _CHUNK, 0:1]
        py = p[lo:lo + _CHUNK, 1:2]
        qx = q[lo:lo + _CHUNK, 0:1]
        qy = q[lo:lo + _CHUNK, 1:2]
        near = ((np.maximum(ax, bx) >= np.minimum(px, qx))
                & (np.minimum(ax, bx) <= np.maximum(px, qx))
                & (np.maximum(ay, by) >= np.minimum(py, qy))
                & (np.minimum(ay, by) <= np.maximum(py, qy)))
        o1 = _orient(px, py, qx, qy, ax, ay)
        o2 = _orient(px, py, qx, qy, bx, by)
        o3 = _orient(ax, ay, bx, by, px, py)
        o4 = _orient(ax, ay, bx, by, qx, qy)
        hit = ((((o1 > 0) & (o2 < 0)) | ((o1 < 0) & (o2 > 0)))
               & (((o3 > 0) & (o4 < 0)) | ((o3 < 0) & (o4 > 0))))
        hit |= (o1 == 0) & _on_segment(px, py, qx, qy, ax, ay)
        hit |= (o2 == 0) & _on_segment(px, py, qx, qy, bx, by)
        hit |= (o3 == 0) & _on_segment(ax, ay, bx, by, px, py)
        hit |= (o4 == 0) & _on_segment(ax, ay, bx, by, qx, qy)
        out[lo:lo + _CHUNK] = (hit & near).any(axis=1)
    return out


def sample_path(indptr, indices, cum, start, uniforms):
    """Walk a CSR chain using pre-drawn uniforms.

    ``cum`` holds per-row cumulative probabilities aligned with ``indices``;
    the successor is the first slot in the row whose cumulative value exceeds
    the uniform draw (the last slot of each row is a catch-all).
    """
    path = np.empty(len(uniforms) + 1, dtype=np.int64)
    s = int(start)
    path[0] = s
    for t, u in enumerate(uniforms):
        lo, hi = indptr[s], indptr[s + 1]
        k = lo + int(np.searchsorted(cum[lo:hi - 1], u, side="right"))
        s = int(indices[k])
        path[t + 1] = s
    return path
