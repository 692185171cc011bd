# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``msirl._pykernels`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _orient(double ax, double ay, double bx, double by,
                           double cx, double cy) nogil:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


cdef inline bint _on_segment(double ax, double ay, double bx, double by,
                             double cx, double cy) nogil:
    return (cx >= (ax if ax < bx else bx) and cx <= (bx if ax < bx else ax)
            and cy >= (ay if ay < by else by) and cy <= (by if ay < by else ay))


cdef inline bint _cross(double px, double py, double qx, double qy,
                        double ax, double ay, double bx, double by) nogil:
    cdef double o1 = _orient(px, py, qx, qy, ax, ay)
    cdef double o2 = _orient(px, py, qx, qy, bx, by)
    cdef double o3 = _orient(ax, ay, bx, by, px, py)
    cdef double o4 = _orient(ax, ay, bx, by, qx, qy)
    if (((o1 > 0 and o2 < 0) or (o1 < 0 and o2 > 0))
            and ((o3 > 0 and o4 < 0) or (o3 < 0 and o4 > 0))):
        return True
    if o1 == 0 and _on_segment(px, py, qx, qy, ax, ay):
        return True
    if o2 == 0 and _on_segment(px, py, qx, qy, bx, by):
        return True
    if o3 == 0 and _on_segment(ax, ay, bx, by, px, py):
        return True
    if o4 == 0 and _on_segment(ax, ay, bx, by, qx, qy):
        return True
    return False


def segments_blocked(const double[:, ::1] p, const double[:, ::1] q,
                     const double[:, ::1] walls):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t nw = walls.shape[0]
    cdef Py_ssize_t i, k
    cdef double px, py, qx, qy, lox, hix, loy, hiy
    cdef double ax, ay, bx, by
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] res = out
    with nogil:
        for i in range(n):
            px = p[i, 0]; py = p[i, 1]; qx = q[i, 0]; qy = q[i, 1]
            lox = px if px < qx else qx
            hix = qx if px < qx else px
            loy = py if py < qy else qy
            hiy = qy if py < qy else py
            for k in range(nw):
                ax = walls[k, 0]; ay = walls[k, 1]; bx = walls[k, 2]; by = walls[k, 3]
                if (ax if ax > bx else bx) < lox or (ax if ax < bx else bx) > hix:
                    continue
                if (ay if ay > by else by) < loy or (ay if ay < by else by) > hiy:
                    continue
                if _cross(px, py, qx, qy, ax, ay, bx, by):
                    res[i] = 1
                    break
    return out


def sample_path(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[::1] cum, Py_ssize_t start, const double[::1] uniforms):
    cdef Py_ssize_t n_steps = uniforms.shape[0]
    cdef Py_ssize_t t, lo, hi, mid, s = start
    cdef double u
    out = np.empty(n_steps + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] path = out
    path[0] = s
    with nogil:
        for t in range(n_steps):
            u = uniforms[t]
            lo = indptr[s]
            hi = indptr[s + 1] - 1
            # first slot with cum > u; the last slot of a row always qualifies
            while lo < hi:
                mid = (lo + hi) // 2
                if cum[mid] > u:
                    hi = mid
                else:
                    lo = mid + 1
            s = indices[lo]
            path[t + 1] = s
    return out
