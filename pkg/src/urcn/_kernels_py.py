"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np


def _plane_alphas(a0, d, n, pitch):
    if d == 0.0:
        return np.empty(0)
    planes = -0.5 * n * pitch + pitch * np.arange(n + 1)
    a = (planes - a0) / d
    a = a[(a > 0.0) & (a < 1.0)]
    return np.sort(a)


def trace_rays(src, dst, n, pitch):
    src = np.ascontiguousarray(src, dtype=np.float64)
    dst = np.ascontiguousarray(dst, dtype=np.float64)
    lo = -0.5 * n * pitch
    rows, cols, vals = [], [], []
    for r in range(src.shape[0]):
        x0, y0 = src[r]
        dx, dy = dst[r, 0] - x0, dst[r, 1] - y0
        length = math.sqrt(dx * dx + dy * dy)
        alphas = np.concatenate(([0.0], np.sort(np.concatenate((
            _plane_alphas(x0, dx, n, pitch), _plane_alphas(y0, dy, n, pitch)))), [1.0]))
        a_prev, a_next = alphas[:-1], alphas[1:]
        keep = a_next > a_prev
        a_prev, a_next = a_prev[keep], a_next[keep]
        am = 0.5 * (a_prev + a_next)
        j = np.floor((x0 + am * dx - lo) / pitch).astype(np.int64)
        i = np.floor((y0 + am * dy - lo) / pitch).astype(np.int64)
        inside = (i >= 0) & (i < n) & (j >= 0) & (j < n)
        rows.append(np.full(int(inside.sum()), r, dtype=np.int64))
        cols.append(i[inside] * n + j[inside])
        vals.append((a_next[inside] - a_prev[inside]) * length)
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def dart_throw(order, radius, excluded):
    radius = np.asarray(radius, dtype=np.float64)
    excluded = np.asarray(excluded, dtype=bool)
    h, w = radius.shape
    acc = np.zeros((h, w), dtype=bool)
    for idx in np.asarray(order, dtype=np.int64):
        i, j = divmod(int(idx), w)
        if excluded[i, j]:
            continue
        r = radius[i, j]
        rr = int(math.ceil(r))
        i0, i1 = max(i - rr, 0), min(i + rr + 1, h)
        j0, j1 = max(j - rr, 0), min(j + rr + 1, w)
        win = acc[i0:i1, j0:j1]
        if win.any():
            di = np.arange(i0, i1)[:, None] - i
            dj = np.arange(j0, j1)[None, :] - j
            if np.any(win & (di * di + dj * dj < r * r)):
                continue
        acc[i, j] = True
    return acc.astype(np.uint8)
