"""Finite-difference oracles shared by the test modules."""
import numpy as np


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def numeric_grad(fn, x, h=1e-5):
    """Central-difference gradient of scalar ``fn`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = fn()
        x[i] = old - h
        fm = fn()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def coordinate_check(params, loss_fn, analytic, rng, n_coords=3, h=1e-7, floor=1e-4, kink_tol=1e-3):
    """Compare analytic and central-difference partials on random coordinates.

    ``params`` maps names to leaf tensors, ``analytic`` maps names to their
    gradients. Returns ``(worst relative error, name, checked, skipped)``, where
    each tensor's error is measured on the vector of its sampled partials
    (with ``floor`` guarding partials that are zero up to rounding).
    A coordinate whose two-sided slopes disagree sits on a ReLU kink; it is
    skipped because the derivative does not exist there.
    """
    worst, worst_name, checked, skipped = 0.0, None, 0, 0
    f0 = loss_fn()
    for name, t in params.items():
        flat = t.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        fd, an = [], []
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn()
            flat[i] = old - h
            fm = loss_fn()
            flat[i] = old
            right, left = (fp - f0) / h, (f0 - fm) / h
            if abs(right - left) > kink_tol * max(abs(right), abs(left), 1e-3):
                skipped += 1
                continue
            checked += 1
            fd.append((fp - fm) / (2 * h))
            an.append(analytic[name].reshape(-1)[i])
        if not fd:
            continue
        err = float(np.linalg.norm(np.subtract(fd, an)) / max(np.linalg.norm(fd), np.linalg.norm(an), floor))
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name, checked, skipped


LAM = 1e-3


def haar_matrix(n):
    """Dense orthonormal 2-D Haar analysis matrix built from 1-D averaging/differencing."""
    def level_1d(k):
        h = np.zeros((k, k))
        for i in range(k // 2):
            h[i, 2 * i] = h[i, 2 * i + 1] = 1 / np.sqrt(2)
            h[k // 2 + i, 2 * i] = 1 / np.sqrt(2)
            h[k // 2 + i, 2 * i + 1] = -1 / np.sqrt(2)
        return h

    full = np.eye(n * n)
    k = n
    while k >= 2:
        step = np.eye(n * n)
        block = np.kron(level_1d(k), level_1d(k))
        idx = (np.arange(n)[:, None] * n + np.arange(n)[None, :])[:k, :k].ravel()
        step[np.ix_(idx, idx)] = block
        full = step @ full
        k //= 2
    return full


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def solver_benchmark(lam=LAM, n_iter=10_000):
    """16x16 two-fold masked Fourier problem with its long-run oracle objective.

    The image is piecewise constant on dyadic blocks, so it has 15 nonzero Haar
    coefficients and the minimizer is well determined by half the k-space.
    The oracle is plain complex ISTA on numpy arrays; only the mask generator
    is shared with the library. Returns ``(operator, data, oracle objective)``.
    """
    from urcn.masks import make_poisson_disk_mask
    from urcn.operators import FourierMaskOperator, to_channels

    n = 16
    mask = make_poisson_disk_mask(n, n, 2.0, center_fraction=0.04, seed=0).mask
    img = np.zeros((n, n))
    img[4:12, 4:12] = 1.0
    img[0:4, 8:16] = 0.5
    img[12:16, 0:4] = 0.75
    img = img * np.exp(1j * 0.3)
    f = mask * np.fft.fft2(img, norm="ortho")
    W = haar_matrix(n)

    def obj(x):
        r = mask * np.fft.fft2(x, norm="ortho") - f
        c = W @ x.ravel()
        return 0.5 * np.sum(np.abs(r) ** 2) + lam * (np.abs(c.real).sum() + np.abs(c.imag).sum())

    x = np.fft.ifft2(f, norm="ortho")
    for _ in range(n_iter):
        r = x - np.fft.ifft2(mask * np.fft.fft2(x, norm="ortho") - f, norm="ortho")
        c = W @ r.ravel()
        c = _soft(c.real, lam) + 1j * _soft(c.imag, lam)
        x = (W.T @ c).reshape(n, n)
    return FourierMaskOperator(mask), to_channels(f), obj(x)
