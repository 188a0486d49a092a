"""Synthetic phantoms, simulated measurements and on-disk datasets."""
from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import ShapeError
from .masks import make_poisson_disk_mask
from .operators import FanBeamOperator, FourierMaskOperator, to_channels

# (intensity, semi-axis a, semi-axis b, center x, center y, angle in degrees)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]

PHANTOM_KINDS = ("shepp_logan", "random_ellipses")


def _grid(size):
    c = (np.arange(size) - 0.5 * (size - 1)) / (0.5 * size)
    x, y = np.meshgrid(c, -c, indexing="xy")
    return x, y


def _paint(size, ellipses):
    x, y = _grid(size)
    img = np.zeros((size, size))
    for val, a, b, x0, y0, deg in ellipses:
        t = np.deg2rad(deg)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return img


def _normalize(img):
    img = np.clip(img, 0.0, None)
    peak = img.max()
    return img / peak if peak > 0 else img


def shepp_logan(size):
    """Modified Shepp-Logan head phantom scaled to [0, 1]."""
    return _normalize(_paint(size, _SHEPP_LOGAN))


def random_ellipses(size, seed=0, n_ellipses=10):
    """Elliptical body plus random overlapping inclusions, scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    body_a, body_b = rng.uniform(0.7, 0.9, 2)
    ellipses = [(rng.uniform(0.3, 0.6), body_a, body_b, 0.0, 0.0, rng.uniform(-30, 30))]
    for _ in range(n_ellipses):
        a, b = rng.uniform(0.04, 0.3, 2)
        r = rng.uniform(0.0, 0.6)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        ellipses.append((rng.uniform(-0.3, 0.5), a, b, r * body_a * np.cos(phi),
                         r * body_b * np.sin(phi), rng.uniform(0.0, 180.0)))
    return _normalize(_paint(size, ellipses))


def make_phantom(kind, size, seed=0):
    if kind == "shepp_logan":
        return shepp_logan(size)
    if kind == "random_ellipses":
        return random_ellipses(size, seed)
    raise ValueError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")


def disk_phantom(size, radius, supersample=8):
    """Centered disk of value 1 and radius ``radius`` pixels, area-weighted at the rim."""
    s = int(supersample)
    c = (np.arange(size * s) + 0.5) / s - 0.5 * size
    x, y = np.meshgrid(c, c, indexing="xy")
    inside = (x * x + y * y <= radius * radius).astype(np.float64)
    return inside.reshape(size, s, size, s).mean(axis=(1, 3))


def smooth_phase(size, seed=0, scale=np.pi / 4):
    """Random quadratic phase map with values roughly within ``[-scale, scale]``."""
    rng = np.random.default_rng(seed)
    x, y = _grid(size)
    basis = np.stack([np.ones_like(x), x, y, x * y, x * x - 0.5, y * y - 0.5])
    coef = rng.uniform(-1.0, 1.0, len(basis)) * scale / np.array([1, 1, 1, 1, 2, 2])
    return np.tensordot(coef, basis, axes=1)


def mri_phantom(kind, size, seed=0):
    """Two-channel complex phantom: magnitude in [0, 1] times a smooth phase."""
    mag = make_phantom(kind, size, seed)
    return to_channels(mag * np.exp(1j * smooth_phase(size, seed + 1)))


def _as_two_channel(phantom):
    p = np.asarray(phantom)
    if np.iscomplexobj(p):
        return to_channels(p)
    if p.ndim == 2:
        return np.stack([p, np.zeros_like(p)], axis=-1).astype(np.float64)
    if p.ndim == 3 and p.shape[-1] == 2:
        return p.astype(np.float64)
    raise ShapeError(f"MRI phantom must be (H, W), complex (H, W) or (H, W, 2); got {p.shape}")


def make_mri_sample(phantom, mask, noise_sigma=0.0, seed=0):
    """Undersampled noisy k-space ``f = mask * (FFT(m) + noise)``.

    Returns ``(f, mask, m_ref)`` with ``f`` and ``m_ref`` in (H, W, 2) layout
    and the boolean mask in unshifted order.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    m_ref = _as_two_channel(phantom)
    mask = np.asarray(getattr(mask, "mask", mask), dtype=bool)
    if mask.shape != m_ref.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match image {m_ref.shape[:2]}")
    full = FourierMaskOperator(np.ones_like(mask)).apply(m_ref)
    if noise_sigma > 0:
        full = full + np.random.default_rng(seed).normal(0.0, noise_sigma, full.shape)
    return full * mask[..., None], mask, m_ref


@functools.lru_cache(maxsize=4)
def _cached_fanbeam(image_size, n_views):
    return FanBeamOperator(image_size=image_size, n_views=n_views)


def default_fanbeam(image_size=128, n_views=90):
    """Shared fan-beam operator for the default geometry (built once per size)."""
    return _cached_fanbeam(int(image_size), int(n_views))


def make_ct_sample(phantom, op, seed=0, photons=None, mu_scale=0.02):
    """Sparse-view sinogram of ``phantom`` (values read as attenuation per ``1/mu_scale`` mm).

    Noise-free by default. With ``photons`` set, transmitted counts are
    Poisson with mean ``photons * exp(-mu_scale * p)`` and the returned
    sinogram is the log-converted estimate of ``p``.
    """
    p = np.asarray(phantom, dtype=np.float64)
    if p.ndim == 2:
        p = p[..., None]
    if p.shape != op.image_shape:
        raise ShapeError(f"phantom shape {p.shape[:2]} does not match operator image {op.image_shape[:2]}")
    sino = op.apply(p)
    if photons is not None:
        counts = np.random.default_rng(seed).poisson(photons * np.exp(-mu_scale * sino))
        sino = -np.log(np.maximum(counts, 1) / photons) / mu_scale
    return sino, p


@dataclass
class Dataset:
    """Measurements, references and (MRI) per-sample masks of one split."""

    modality: str
    f: np.ndarray
    m_ref: np.ndarray
    masks: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.m_ref)

    @property
    def channels(self):
        return self.m_ref.shape[-1]

    def operator(self, idx=None):
        """Encoding operator for samples ``idx`` (all samples when None)."""
        if self.modality == "mri":
            return FourierMaskOperator(self.masks if idx is None else self.masks[idx])
        return default_fanbeam(self.attrs["size"], self.attrs["n_views"])

    def batch(self, idx):
        idx = np.asarray(idx)
        return self.operator(idx), self.f[idx], self.m_ref[idx]

    def subset(self, idx):
        idx = np.asarray(idx)
        masks = None if self.masks is None else self.masks[idx]
        return Dataset(self.modality, self.f[idx], self.m_ref[idx], masks, dict(self.attrs))

    def save(self, path):
        arrays = {"f": self.f, "m_ref": self.m_ref}
        if self.masks is not None:
            arrays["masks"] = self.masks
        container.write(path, arrays, {"modality": self.modality, **self.attrs})

    @classmethod
    def load(cls, path):
        arrays, attrs = container.read(path)
        modality = attrs.pop("modality")
        return cls(modality, arrays["f"], arrays["m_ref"], arrays.get("masks"), attrs)


SPLITS = ("train", "val", "test")


def simulate_split(modality, n, seed, size=64, acceleration=4.0, n_views=90,
                   noise_sigma=0.0, phantom="random_ellipses", center_fraction=0.04):
    """One split of ``n`` samples; sample ``i`` draws everything from sub-seed ``(seed, i)``."""
    if n < 0:
        raise ValueError("sample counts must be >= 0")
    subseeds = np.random.SeedSequence(seed).spawn(n)
    ints = [int(s.generate_state(1)[0]) for s in subseeds]
    attrs = {"size": int(size), "seed": int(seed), "phantom": phantom, "noise_sigma": float(noise_sigma)}
    if modality == "mri":
        fs, refs, masks = [], [], []
        for s in ints:
            mk = make_poisson_disk_mask(size, size, acceleration, center_fraction, seed=s).mask
            f, mk, ref = make_mri_sample(mri_phantom(phantom, size, s), mk, noise_sigma, s + 2)
            fs.append(f)
            refs.append(ref)
            masks.append(mk)
        attrs.update(acceleration=float(acceleration), center_fraction=float(center_fraction))
        shape = (size, size, 2)
        return Dataset("mri", np.array(fs).reshape((n,) + shape), np.array(refs).reshape((n,) + shape),
                       np.array(masks, dtype=bool).reshape((n, size, size)), attrs)
    if modality == "ct":
        op = default_fanbeam(size, n_views)
        refs = np.array([make_phantom(phantom, size, s) for s in ints]).reshape(n, size, size, 1)
        attrs.update(n_views=int(n_views))
        if noise_sigma:
            raise ValueError("CT simulation is noise-free; use make_ct_sample(photons=...) for Poisson noise")
        return Dataset("ct", op.apply(refs), refs, None, attrs)
    raise ValueError(f"unknown modality {modality!r}; choose 'mri' or 'ct'")


def build_dataset(out_dir, n_train, n_val, n_test, modality="mri", seed=0, **kwargs):
    """Write ``train.urcn``, ``val.urcn`` and ``test.urcn`` under ``out_dir``.

    The splits use independent child seeds of ``seed`` so they never share
    a phantom or mask stream. Returns the written paths keyed by split.
    """
    counts = dict(zip(SPLITS, (n_train, n_val, n_test)))
    children = np.random.SeedSequence(seed).spawn(len(SPLITS))
    paths = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc
    for split, child in zip(SPLITS, children):
        split_seed = int(child.generate_state(1)[0])
        ds = simulate_split(modality, counts[split], split_seed, **kwargs)
        ds.attrs["split"] = split
        path = os.path.join(out_dir, f"{split}.urcn")
        ds.save(path)
        paths[split] = path
    return paths
