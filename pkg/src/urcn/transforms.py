"""Sparsifying transforms applied channel-wise to ``(..., H, W, C)`` arrays."""
from __future__ import annotations

import numpy as np

_SQRT2 = np.sqrt(2.0)


def _haar_axis(x, axis):
    even = np.take(x, np.arange(0, x.shape[axis], 2), axis=axis)
    odd = np.take(x, np.arange(1, x.shape[axis], 2), axis=axis)
    return np.concatenate([(even + odd) / _SQRT2, (even - odd) / _SQRT2], axis=axis)


def _ihaar_axis(x, axis):
    n = x.shape[axis] // 2
    a = np.take(x, np.arange(n), axis=axis)
    d = np.take(x, np.arange(n, 2 * n), axis=axis)
    out = np.empty_like(x)
    idx_even = [slice(None)] * x.ndim
    idx_odd = [slice(None)] * x.ndim
    idx_even[axis] = slice(0, None, 2)
    idx_odd[axis] = slice(1, None, 2)
    out[tuple(idx_even)] = (a + d) / _SQRT2
    out[tuple(idx_odd)] = (a - d) / _SQRT2
    return out


def max_haar_levels(h, w):
    levels = 0
    while h % 2 == 0 and w % 2 == 0 and h >= 2 and w >= 2:
        h //= 2
        w //= 2
        levels += 1
    return levels


class HaarWavelet:
    """Orthonormal multi-level 2-D Haar transform (Mallat layout)."""

    orthogonal = True

    def __init__(self, levels=None):
        self.levels = levels

    def _levels(self, h, w):
        top = max_haar_levels(h, w)
        n = top if self.levels is None else min(self.levels, top)
        if n < 1:
            raise ValueError(f"Haar transform needs even image dimensions, got {h}x{w}")
        return n

    def forward(self, x):
        x = np.array(x, dtype=np.float64, copy=True)
        h, w = x.shape[-3], x.shape[-2]
        for lev in range(self._levels(h, w)):
            hh, ww = h >> lev, w >> lev
            block = x[..., :hh, :ww, :]
            block = _haar_axis(_haar_axis(block, -3), -2)
            x[..., :hh, :ww, :] = block
        return x

    def adjoint(self, c):
        c = np.array(c, dtype=np.float64, copy=True)
        h, w = c.shape[-3], c.shape[-2]
        for lev in reversed(range(self._levels(h, w))):
            hh, ww = h >> lev, w >> lev
            block = c[..., :hh, :ww, :]
            block = _ihaar_axis(_ihaar_axis(block, -2), -3)
            c[..., :hh, :ww, :] = block
        return c

    inverse = adjoint


class IdentityTransform:
    orthogonal = True

    def forward(self, x):
        return np.array(x, dtype=np.float64, copy=True)

    adjoint = forward
    inverse = forward


class FiniteDifferences:
    """Forward differences along y and x with a zero last difference.

    ``forward`` maps ``(..., H, W, C)`` to ``(..., H, W, C, 2)``.
    """

    orthogonal = False
    norm_squared_bound = 8.0

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (2,))
        out[..., :-1, :, :, 0] = x[..., 1:, :, :] - x[..., :-1, :, :]
        out[..., :, :-1, :, 1] = x[..., :, 1:, :] - x[..., :, :-1, :]
        return out

    def adjoint(self, g):
        g = np.asarray(g, dtype=np.float64)
        gy, gx = g[..., 0], g[..., 1]
        out = np.zeros(g.shape[:-1])
        out[..., :-1, :, :] -= gy[..., :-1, :, :]
        out[..., 1:, :, :] += gy[..., :-1, :, :]
        out[..., :, :-1, :] -= gx[..., :, :-1, :]
        out[..., :, 1:, :] += gx[..., :, :-1, :]
        return out


TRANSFORMS = {
    "haar_wavelet": HaarWavelet,
    "identity": IdentityTransform,
    "finite_differences": FiniteDifferences,
}


def make_transform(name, **kwargs):
    try:
        cls = TRANSFORMS[name]
    except KeyError:
        raise ValueError(f"unknown transform {name!r}; choose from {sorted(TRANSFORMS)}") from None
    return cls(**kwargs)
