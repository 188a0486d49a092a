"""Linear forward models and their adjoints.

Images and measurements are real arrays with a trailing channel axis. MRI
data use two channels (real, imaginary); CT data use one. Every operator
accepts optional leading batch axes.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from ._backend import get_kernels
from .errors import ShapeError


def to_complex(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 2:
        raise ShapeError(f"expected 2 channels (real, imag), got shape {x.shape}")
    return x[..., 0] + 1j * x[..., 1]


def to_channels(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1).astype(np.float64, copy=False)


def inner(a, b):
    """Real inner product of two same-shape arrays."""
    return float(np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel()).real)


class IdentityOperator:
    """``A = I`` on images of a fixed shape (per sample)."""

    def __init__(self, shape):
        self.image_shape = tuple(shape)
        self.measurement_shape = tuple(shape)
        self.channels = self.image_shape[-1]

    def apply(self, x):
        return np.array(x, dtype=np.float64, copy=True)

    adjoint = apply

    def normal_solve(self, b, rho):
        return np.asarray(b, dtype=np.float64) / (1.0 + rho)

    def norm(self):
        return 1.0


class FourierMaskOperator:
    """Masked orthonormal 2-D DFT: ``A m = mask * FFT(m)``.

    ``mask`` is boolean ``(H, W)`` or batched ``(N, H, W)`` and is stored in
    unshifted FFT order (DC at ``[0, 0]``). Measurements keep the full grid,
    with zeros at unsampled locations.
    """

    channels = 2

    def __init__(self, mask):
        mask = np.asarray(mask)
        if mask.ndim not in (2, 3):
            raise ShapeError(f"mask must be (H, W) or (N, H, W), got {mask.shape}")
        self.mask = mask.astype(bool)
        self.mask.setflags(write=False)
        self._maskf = self.mask.astype(np.float64)
        self.height, self.width = self.mask.shape[-2:]
        self.image_shape = (self.height, self.width, 2)
        self.measurement_shape = self.image_shape

    def _check(self, x):
        if x.shape[-3:] != self.image_shape:
            raise ShapeError(f"expected (..., {self.height}, {self.width}, 2), got {x.shape}")

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        k = np.fft.fft2(to_complex(x), norm="ortho") * self._maskf
        return to_channels(k)

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        self._check(y)
        return to_channels(np.fft.ifft2(to_complex(y) * self._maskf, norm="ortho"))

    def normal_solve(self, b, rho):
        """Exact ``(A^H A + rho I)^{-1} b``; diagonal in k-space."""
        b = np.asarray(b, dtype=np.float64)
        self._check(b)
        denom = self._maskf + rho
        if np.any(denom == 0):
            raise ZeroDivisionError("A^H A + rho I is singular (rho = 0 with unsampled locations)")
        k = np.fft.fft2(to_complex(b), norm="ortho") / denom
        return to_channels(np.fft.ifft2(k, norm="ortho"))

    def norm(self):
        return 1.0 if self.mask.any() else 0.0


class FanBeamOperator:
    """Ray-driven fan-beam projector with a flat detector.

    The system matrix holds the intersection length (mm) of each source to
    detector-cell-center ray with each pixel, traced with Siddon's method.
    ``adjoint`` multiplies by its exact transpose.

    Parameters are in millimetres and radians. ``pixel_pitch=None`` picks the
    largest pitch whose image diagonal fits inside the scanned field of view.
    """

    channels = 1

    def __init__(self, image_size=128, pixel_pitch=None, source_detector_dist=1200.0,
                 source_center_dist=1000.0, n_detectors=300, detector_pitch=0.5,
                 n_views=90, view_angles=None, backend=None, cg_steps=20, cg_tol=1e-8):
        if source_center_dist <= 0 or source_center_dist >= source_detector_dist:
            raise ValueError("geometry requires 0 < source_center_dist < source_detector_dist")
        if image_size < 1 or n_detectors < 1:
            raise ValueError("image_size and n_detectors must be positive")
        self.image_size = int(image_size)
        self.source_detector_dist = float(source_detector_dist)
        self.source_center_dist = float(source_center_dist)
        self.n_detectors = int(n_detectors)
        self.detector_pitch = float(detector_pitch)
        if view_angles is None:
            if n_views < 1:
                raise ValueError("n_views must be positive")
            view_angles = 2.0 * np.pi * np.arange(n_views) / n_views
        self.view_angles = np.asarray(view_angles, dtype=np.float64).copy()
        self.view_angles.setflags(write=False)
        self.n_views = len(self.view_angles)
        half_fan = math.atan(0.5 * self.n_detectors * self.detector_pitch / self.source_detector_dist)
        self.fov_radius = self.source_center_dist * math.sin(half_fan)
        if pixel_pitch is None:
            pixel_pitch = 0.98 * 2.0 * self.fov_radius / (self.image_size * math.sqrt(2.0))
        self.pixel_pitch = float(pixel_pitch)
        if 0.5 * self.image_size * self.pixel_pitch > self.fov_radius:
            raise ValueError(
                f"image half-width {0.5 * self.image_size * self.pixel_pitch:.3f} mm exceeds "
                f"field-of-view radius {self.fov_radius:.3f} mm")
        self.cg_steps = int(cg_steps)
        self.cg_tol = float(cg_tol)
        self.image_shape = (self.image_size, self.image_size, 1)
        self.measurement_shape = (self.n_views, self.n_detectors, 1)
        src, dst = self.ray_endpoints()
        rows, cols, vals = get_kernels(backend).trace_rays(src, dst, self.image_size, self.pixel_pitch)
        self.matrix = sp.csr_matrix(
            (vals, (rows, cols)),
            shape=(self.n_views * self.n_detectors, self.image_size ** 2))
        self._matrix_t = self.matrix.T.tocsr()

    def geometry(self):
        """Plain-dict description, suitable for manifests."""
        return {
            "image_size": self.image_size,
            "pixel_pitch": self.pixel_pitch,
            "source_detector_dist": self.source_detector_dist,
            "source_center_dist": self.source_center_dist,
            "n_detectors": self.n_detectors,
            "detector_pitch": self.detector_pitch,
            "n_views": self.n_views,
        }

    def detector_offsets(self):
        """Cell-center coordinates along the detector (mm)."""
        return (np.arange(self.n_detectors) - 0.5 * (self.n_detectors - 1)) * self.detector_pitch

    def ray_endpoints(self):
        beta = self.view_angles[:, None]
        u = self.detector_offsets()[None, :]
        cb, sb = np.cos(beta), np.sin(beta)
        sod, sdd = self.source_center_dist, self.source_detector_dist
        sx = np.broadcast_to(sod * cb, (self.n_views, self.n_detectors))
        sy = np.broadcast_to(sod * sb, (self.n_views, self.n_detectors))
        dx = -(sdd - sod) * cb - u * sb
        dy = -(sdd - sod) * sb + u * cb
        src = np.stack([sx.ravel(), sy.ravel()], axis=1)
        dst = np.stack([dx.ravel(), dy.ravel()], axis=1)
        return np.ascontiguousarray(src), np.ascontiguousarray(dst)

    def pixel_centers(self):
        """(x, y) of pixel centers, each shaped (n, n); x varies along columns."""
        c = (np.arange(self.image_size) - 0.5 * (self.image_size - 1)) * self.pixel_pitch
        return np.meshgrid(c, c, indexing="xy")

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-3:] != self.image_shape:
            raise ShapeError(f"expected (..., {self.image_size}, {self.image_size}, 1), got {x.shape}")
        lead = x.shape[:-3]
        flat = x.reshape(-1, self.image_size ** 2)
        out = (self.matrix @ flat.T).T
        return np.ascontiguousarray(out).reshape(lead + self.measurement_shape)

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-3:] != self.measurement_shape:
            raise ShapeError(f"expected (..., {self.n_views}, {self.n_detectors}, 1), got {y.shape}")
        lead = y.shape[:-3]
        flat = y.reshape(-1, self.n_views * self.n_detectors)
        out = (self._matrix_t @ flat.T).T
        return np.ascontiguousarray(out).reshape(lead + self.image_shape)

    def view_adjoint(self, y_view, view):
        """Transpose of the rows of a single view, applied to one projection."""
        rows = slice(view * self.n_detectors, (view + 1) * self.n_detectors)
        return (self.matrix[rows].T @ np.asarray(y_view, dtype=np.float64)).reshape(
            self.image_size, self.image_size)

    def normal_solve(self, b, rho, x0=None):
        """Approximate ``(A^T A + rho I)^{-1} b`` by conjugate gradients."""
        return conjugate_gradient(
            lambda v: self.adjoint(self.apply(v)) + rho * v, b, x0=x0,
            n_steps=self.cg_steps, tol=self.cg_tol)

    def norm(self, n_iter=50, seed=0):
        return operator_norm(self, n_iter=n_iter, seed=seed)


def conjugate_gradient(normal_op, b, x0=None, n_steps=20, tol=1e-8):
    """Batched CG for a self-adjoint positive definite map.

    Leading axes beyond the per-sample image shape ``b.shape[-3:]`` are
    treated as independent systems. Stops after ``n_steps`` or when every
    residual norm falls below ``tol`` times its initial right-hand side norm.
    """
    b = np.asarray(b, dtype=np.float64)
    lead = b.shape[:-3]
    axes = (-3, -2, -1)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    r = b - normal_op(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = np.sum(r * r, axis=axes, keepdims=True)
    bnorm = np.sqrt(np.sum(b * b, axis=axes, keepdims=True))
    stop = tol * np.where(bnorm > 0, bnorm, 1.0)
    for _ in range(n_steps):
        if np.all(np.sqrt(rs) <= stop):
            break
        ap = normal_op(p)
        pap = np.sum(p * ap, axis=axes, keepdims=True)
        alpha = np.where(pap > 0, rs / np.where(pap > 0, pap, 1.0), 0.0)
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = np.sum(r * r, axis=axes, keepdims=True)
        beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        p = r + beta * p
        rs = rs_new
    return x.reshape(lead + b.shape[-3:])


def operator_norm(op, n_iter=50, seed=0):
    """Largest singular value of ``op`` by power iteration on ``A^T A``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.image_shape)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(n_iter):
        y = op.adjoint(op.apply(x))
        s = np.linalg.norm(y)
        if s == 0:
            return 0.0
        x = y / s
    return float(np.sqrt(s))
