"""Image quality metrics and the radial error spectrum.

MSE, PSNR and SSIM compare magnitude images; the error spectrum uses the
complex difference. Images may be (H, W), complex (H, W), or channels-last
(H, W, 1) / (H, W, 2).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DegenerateInputError, ShapeError

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check(x, ref):
    x, ref = np.asarray(x), np.asarray(ref)
    if x.shape != ref.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {ref.shape}")
    return x, ref


def as_complex(img):
    img = np.asarray(img)
    if np.iscomplexobj(img) or img.ndim == 2:
        return img.astype(np.complex128)
    if img.ndim == 3 and img.shape[-1] == 2:
        return img[..., 0] + 1j * img[..., 1]
    if img.ndim == 3 and img.shape[-1] == 1:
        return img[..., 0].astype(np.complex128)
    raise ShapeError(f"expected (H, W), (H, W, 1) or (H, W, 2), got {img.shape}")


def magnitude(img):
    return np.abs(as_complex(img))


def mse(x, ref):
    x, ref = _check(x, ref)
    d = magnitude(x) - magnitude(ref)
    return float(np.mean(d * d))


def psnr(x, ref):
    """``10 log10(peak^2 / mse)`` with ``peak = max |ref|``; ``inf`` when mse is 0."""
    err = mse(x, ref)
    if err == 0.0:
        return float("inf")
    peak = float(magnitude(ref).max())
    return float(10.0 * np.log10(peak * peak / err))


def ssim(x, ref):
    """Mean local SSIM, Gaussian window (11x11, sigma 1.5), range of ``ref``.

    Local statistics use reflective padding and the border of half a window
    is excluded from the mean.
    """
    x, ref = _check(x, ref)
    a, b = magnitude(x), magnitude(ref)
    dyn = float(b.max() - b.min())
    if dyn == 0.0:
        raise DegenerateInputError("reference has zero dynamic range; SSIM is undefined")
    c1, c2 = (SSIM_K1 * dyn) ** 2, (SSIM_K2 * dyn) ** 2
    blur = lambda z: gaussian_filter(z, SSIM_SIGMA, mode="reflect", truncate=SSIM_RADIUS / SSIM_SIGMA)  # noqa: E731
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    r = SSIM_RADIUS
    inner = smap[r:-r, r:-r] if min(smap.shape) > 2 * r else smap
    return float(np.clip(inner.mean(), -1.0, 1.0))


def radial_bins(h, w, n_bins=None):
    """Integer ring index of every unshifted k-space sample, width 1 pixel.

    Rings run from DC to the Nyquist radius ``min(h, w) // 2``; corner
    frequencies beyond it fall into the last ring so the rings partition
    k-space.
    """
    if n_bins is None:
        n_bins = min(h, w) // 2 + 1
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    r = np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)
    return np.minimum(np.floor(r).astype(np.int64), n_bins - 1), n_bins


def spectrum_energies(x, ref, n_bins=None):
    """Per-ring energies of ``FFT(x - ref)`` and ``FFT(ref)`` (orthonormal FFT)."""
    x, ref = _check(x, ref)
    zx, zr = as_complex(x), as_complex(ref)
    bins, n_bins = radial_bins(*zr.shape, n_bins)
    e = np.fft.fft2(zx - zr, norm="ortho")
    k = np.fft.fft2(zr, norm="ortho")
    err = np.bincount(bins.ravel(), weights=np.abs(e).ravel() ** 2, minlength=n_bins)
    ref_e = np.bincount(bins.ravel(), weights=np.abs(k).ravel() ** 2, minlength=n_bins)
    return err, ref_e


def error_spectrum(x, ref, n_bins=None):
    """``[(radius, ||E_r|| / ||R_r||), ...]``; rings without reference energy give NaN."""
    err, ref_e = spectrum_energies(x, ref, n_bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ref_e > 0, np.sqrt(err) / np.sqrt(np.where(ref_e > 0, ref_e, 1.0)), np.nan)
    return [(int(r), float(v)) for r, v in enumerate(rel)]


def spectrum_trend(esp):
    """Describe whether relative error grows with radius (reported, not enforced)."""
    vals = np.array([v for _, v in esp if np.isfinite(v)])
    radii = np.array([r for r, v in esp if np.isfinite(v)], dtype=np.float64)
    if len(vals) < 2:
        return {"valid_bins": int(len(vals)), "increasing_fraction": float("nan"),
                "slope": float("nan"), "monotone": False}
    steps = np.diff(vals)
    return {
        "valid_bins": int(len(vals)),
        "increasing_fraction": float(np.mean(steps >= 0)),
        "slope": float(np.polyfit(radii, vals, 1)[0]),
        "monotone": bool(np.all(steps >= 0)),
    }


@dataclass
class MetricReport:
    mse: float
    psnr_db: float
    ssim: float
    esp: list = field(default_factory=list)

    def row(self):
        return {"mse": self.mse, "psnr_db": self.psnr_db, "ssim": self.ssim}


def evaluate_image(x, ref, n_bins=None):
    return MetricReport(mse(x, ref), psnr(x, ref), ssim(x, ref), error_spectrum(x, ref, n_bins))


def aggregate(values):
    """Mean over finite entries (NaN when none are finite)."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[h] for h in header] if isinstance(row, dict) else list(row))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
