"""Variable-density Poisson-disk k-space sampling masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .errors import TuningError


@dataclass(frozen=True)
class SamplingMask:
    """Boolean k-space mask in unshifted FFT order (DC at ``[0, 0]``)."""

    mask: np.ndarray
    acceleration: float
    center_fraction: float
    radius: float = 0.0
    seed: int | None = None

    @property
    def shape(self):
        return self.mask.shape

    @property
    def sampled_fraction(self):
        return float(self.mask.mean())

    def centered(self):
        """Mask with DC moved to the array center, for display."""
        return np.fft.fftshift(self.mask)


def center_square(h, w, center_fraction):
    """Centered boolean square spanning ``center_fraction`` of each side."""
    out = np.zeros((h, w), dtype=bool)
    ch = int(round(center_fraction * h))
    cw = int(round(center_fraction * w))
    if ch > 0 and cw > 0:
        i0 = h // 2 - ch // 2
        j0 = w // 2 - cw // 2
        out[i0:i0 + ch, j0:j0 + cw] = True
    return out


def _normalized_radius(h, w):
    ky = (np.arange(h) - h // 2) / (h / 2.0)
    kx = (np.arange(w) - w // 2) / (w / 2.0)
    return np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)


def make_poisson_disk_mask(h, w, acceleration, center_fraction=0.04, seed=0,
                           max_steps=60, backend=None):
    """Variable-density Poisson-disk mask with a fully sampled center square.

    Candidates are visited in a seeded random order and accepted when no
    earlier accepted sample lies within ``r0 * sqrt(1 + rho)`` pixels, where
    ``rho`` is the radius normalized to 1 at the edge midpoints (so the
    sample density falls off as ``1 / (1 + rho)``). ``r0`` is bisected until
    the sampled fraction, center included, lies within 10% of ``1 / R``.
    """
    if acceleration < 1:
        raise ValueError(f"acceleration must be >= 1, got {acceleration}")
    if not 0.0 <= center_fraction <= 0.25:
        raise ValueError(f"center_fraction must lie in [0, 0.25], got {center_fraction}")
    if acceleration == 1:
        return SamplingMask(np.ones((h, w), dtype=bool), 1.0, center_fraction, 0.0, seed)

    kernels = get_kernels(backend)
    target = 1.0 / acceleration
    lo_frac, hi_frac = 0.9 * target, 1.1 * target
    center = center_square(h, w, center_fraction)
    if center.mean() > hi_frac:
        raise TuningError(f"center region alone samples {center.mean():.3f} > {hi_frac:.3f}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(h * w).astype(np.int64)
    profile = np.sqrt(1.0 + _normalized_radius(h, w))
    excluded = center.astype(np.uint8)

    def sample(r0):
        acc = kernels.dart_throw(order, np.ascontiguousarray(r0 * profile), excluded)
        return acc.astype(bool) | center

    lo, hi = 0.5, float(max(h, w))
    for _ in range(max_steps):
        r0 = 0.5 * (lo + hi)
        centered = sample(r0)
        frac = centered.mean()
        if lo_frac <= frac <= hi_frac:
            mask = np.fft.ifftshift(centered)
            return SamplingMask(mask, float(acceleration), center_fraction, r0, seed)
        if frac > hi_frac:
            lo = r0
        else:
            hi = r0
    raise TuningError(
        f"could not reach sampled fraction {target:.4f} +/- 10% for a {h}x{w} mask "
        f"after {max_steps} bisection steps")
