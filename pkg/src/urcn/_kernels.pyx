# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Must stay result-identical to ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, ceil

cnp.import_array()


cdef inline int _fill_alphas(double a0, double d, int n, double pitch, double* out):
    # parametric positions (in (0, 1)) where the segment crosses grid planes,
    # written in increasing order
    cdef int k, cnt = 0
    cdef double lo = -0.5 * n * pitch, a
    if d == 0.0:
        return 0
    if d > 0:
        for k in range(n + 1):
            a = (lo + k * pitch - a0) / d
            if 0.0 < a < 1.0:
                out[cnt] = a
                cnt += 1
    else:
        for k in range(n, -1, -1):
            a = (lo + k * pitch - a0) / d
            if 0.0 < a < 1.0:
                out[cnt] = a
                cnt += 1
    return cnt


def trace_rays(double[:, ::1] src, double[:, ::1] dst, int n, double pitch):
    """Intersection lengths of segments ``src[r] -> dst[r]`` with an n x n grid.

    Returns ``(rows, cols, vals)`` COO triplets, pixel index ``i * n + j`` with
    ``j`` along x and ``i`` along y.
    """
    cdef Py_ssize_t n_rays = src.shape[0]
    cdef Py_ssize_t cap = n_rays * (2 * n + 4)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cols = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.empty(cap, dtype=np.float64)
    cdef double[::1] ax = np.empty(n + 1)
    cdef double[::1] ay = np.empty(n + 1)
    cdef double[::1] merged = np.empty(2 * n + 4)
    cdef Py_ssize_t r, nnz = 0
    cdef int nx, ny, ix, iy, m, k, i, j
    cdef double x0, y0, dx, dy, length, lo, a_prev, a_next, am, xm, ym, seg
    lo = -0.5 * n * pitch
    for r in range(n_rays):
        x0 = src[r, 0]
        y0 = src[r, 1]
        dx = dst[r, 0] - x0
        dy = dst[r, 1] - y0
        length = sqrt(dx * dx + dy * dy)
        nx = _fill_alphas(x0, dx, n, pitch, &ax[0])
        ny = _fill_alphas(y0, dy, n, pitch, &ay[0])
        merged[0] = 0.0
        m = 1
        ix = 0
        iy = 0
        while ix < nx or iy < ny:
            if iy >= ny or (ix < nx and ax[ix] <= ay[iy]):
                merged[m] = ax[ix]
                ix += 1
            else:
                merged[m] = ay[iy]
                iy += 1
            m += 1
        merged[m] = 1.0
        m += 1
        for k in range(m - 1):
            a_prev = merged[k]
            a_next = merged[k + 1]
            if a_next <= a_prev:
                continue
            am = 0.5 * (a_prev + a_next)
            xm = x0 + am * dx
            ym = y0 + am * dy
            j = <int>floor((xm - lo) / pitch)
            i = <int>floor((ym - lo) / pitch)
            if i < 0 or i >= n or j < 0 or j >= n:
                continue
            seg = (a_next - a_prev) * length
            rows[nnz] = r
            cols[nnz] = i * n + j
            vals[nnz] = seg
            nnz += 1
    return rows[:nnz].copy(), cols[:nnz].copy(), vals[:nnz].copy()


def dart_throw(cnp.int64_t[::1] order, double[:, ::1] radius, cnp.uint8_t[:, ::1] excluded):
    """Accept candidates in ``order`` (flat indices) whose disk is free.

    A candidate at ``(i, j)`` is rejected if an earlier accepted point lies
    strictly closer than ``radius[i, j]``. Cells marked in ``excluded`` are
    never candidates and never block.
    """
    cdef Py_ssize_t h = radius.shape[0], w = radius.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] acc = np.zeros((h, w), dtype=np.uint8)
    cdef Py_ssize_t t, idx, i, j, ii, jj, i0, i1, j0, j1, rr
    cdef double r2, di, dj
    cdef bint ok
    for t in range(order.shape[0]):
        idx = order[t]
        i = idx // w
        j = idx % w
        if excluded[i, j]:
            continue
        r2 = radius[i, j] * radius[i, j]
        rr = <Py_ssize_t>ceil(radius[i, j])
        i0 = i - rr if i - rr > 0 else 0
        i1 = i + rr + 1 if i + rr + 1 < h else h
        j0 = j - rr if j - rr > 0 else 0
        j1 = j + rr + 1 if j + rr + 1 < w else w
        ok = True
        for ii in range(i0, i1):
            if not ok:
                break
            di = <double>(ii - i)
            for jj in range(j0, j1):
                if acc[ii, jj]:
                    dj = <double>(jj - j)
                    if di * di + dj * dj < r2:
                        ok = False
                        break
        if ok:
            acc[i, j] = 1
    return acc
