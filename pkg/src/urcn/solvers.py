"""Non-learned reconstruction baselines.

All three iterative solvers minimize

    0.5 * ||A m - f||^2 + lam * ||Psi m||_1

where complex images are handled in their real two-channel form, so the l1
norm sums absolute values of real and imaginary parts separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .operators import FanBeamOperator, FourierMaskOperator, operator_norm
from .transforms import make_transform


@dataclass
class SparsityConfig:
    transform: str = "haar_wavelet"
    lam: float = 1e-3
    p: int = 1
    L: int = 1
    levels: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.p != 1:
            raise ValueError("only p = 1 is supported")
        if self.L != 1:
            raise ValueError("classical baselines use a single transform (L = 1)")

    def make(self):
        if self.transform == "haar_wavelet":
            return make_transform("haar_wavelet", levels=self.levels)
        return make_transform(self.transform)


@dataclass
class SolverState:
    m: np.ndarray
    iteration: int = 0
    m_bar: np.ndarray | None = None
    d: np.ndarray | None = None
    z: np.ndarray | None = None
    beta: np.ndarray | None = None
    objective_history: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    iterates: list | None = None


def soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def objective(A, f, m, cfg, transform=None):
    psi = transform if transform is not None else cfg.make()
    r = A.apply(m) - f
    return 0.5 * float(np.sum(r * r)) + cfg.lam * float(np.sum(np.abs(psi.forward(m))))


def prox_l1(x, t, transform):
    """``argmin_z t ||Psi z||_1 + 0.5 ||z - x||^2`` for orthogonal ``Psi``."""
    return transform.adjoint(soft(transform.forward(x), t))


def _norm(A, op_norm):
    if op_norm is not None:
        return float(op_norm)
    return float(A.norm()) if hasattr(A, "norm") else operator_norm(A)


def _require_orthogonal(transform, solver):
    if not transform.orthogonal:
        raise ValueError(f"{solver} requires an orthogonal transform (haar_wavelet or identity)")


def duality_gap(A, f, m, d, cfg, transform):
    """Primal-dual gap for an orthogonal ``Psi``.

    The dual iterate is scaled into the feasible set
    ``||Psi A^T y||_inf <= lam`` before evaluating the dual objective
    ``-0.5 ||y||^2 - <y, f>``, so the result is always >= 0.
    """
    primal = objective(A, f, m, cfg, transform)
    v = np.max(np.abs(transform.forward(A.adjoint(d)))) if d.size else 0.0
    s = 1.0 if v <= cfg.lam else (cfg.lam / v if v > 0 else 0.0)
    y = s * d
    dual = -0.5 * float(np.sum(y * y)) - float(np.sum(y * f))
    return primal - dual


def pdhg_solve(A, f, cfg, sigma=None, tau=None, theta_pdhg=1.0, n_iters=100, m0=None,
               op_norm=None, keep_iterates=False):
    """Chambolle-Pock iterations with a closed-form dual update.

    ``d <- (d + sigma (A m_bar - f)) / (1 + sigma)``,
    ``m <- prox_{tau R}(m - tau A^T d)``, ``m_bar <- m + theta (m - m_old)``.
    With ``finite_differences`` the regularizer is dualized as well (extra
    dual ``q`` clipped to ``[-lam, lam]``) and no gap is recorded.
    """
    psi = cfg.make()
    norm_a = _norm(A, op_norm)
    k2 = norm_a ** 2 + (0.0 if psi.orthogonal else psi.norm_squared_bound)
    k = np.sqrt(k2)
    sigma = 0.99 / k if sigma is None else float(sigma)
    tau = 0.99 / k if tau is None else float(tau)
    if sigma < 0 or tau <= 0:
        raise ValueError("sigma must be >= 0 and tau > 0")
    if sigma * tau * k2 > 1.0 + 1e-9:
        raise ValueError(f"step sizes violate sigma*tau*||K||^2 <= 1 ({sigma * tau * k2:.6g})")
    if not 0.0 <= theta_pdhg <= 1.0:
        raise ValueError(f"theta_pdhg must lie in [0, 1], got {theta_pdhg}")
    f = np.asarray(f, dtype=np.float64)
    m = A.adjoint(f) if m0 is None else np.array(m0, dtype=np.float64, copy=True)
    m_bar = m.copy()
    d = np.zeros_like(f)
    q = None if psi.orthogonal else np.zeros_like(psi.forward(m))
    state = SolverState(m=m, m_bar=m_bar, d=d, iterates=[] if keep_iterates else None)
    for _ in range(n_iters):
        d = (d + sigma * (A.apply(m_bar) - f)) / (1.0 + sigma)
        if q is None:
            m_new = prox_l1(m - tau * A.adjoint(d), tau * cfg.lam, psi)
        else:
            q = np.clip(q + sigma * psi.forward(m_bar), -cfg.lam, cfg.lam)
            m_new = m - tau * (A.adjoint(d) + psi.adjoint(q))
        m_bar = m_new + theta_pdhg * (m_new - m)
        m = m_new
        state.iteration += 1
        state.objective_history.append(objective(A, f, m, cfg, psi))
        state.gap_history.append(duality_gap(A, f, m, d, cfg, psi) if q is None else float("nan"))
        if keep_iterates:
            state.iterates.append(m.copy())
    state.m, state.m_bar, state.d = m, m_bar, d
    return state


def admm_solve(A, f, cfg, rho=1.0, n_iters=100, m0=None, keep_iterates=False):
    """Scaled-form ADMM with the split ``z = m``.

    ``m <- (A^T A + rho I)^{-1} (A^T f + rho (z - beta))`` (exact for
    Fourier operators, CG for fan-beam), ``z <- Psi^T soft(Psi (m + beta),
    lam / rho)``, ``beta <- beta + m - z``.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    psi = cfg.make()
    _require_orthogonal(psi, "admm_solve")
    f = np.asarray(f, dtype=np.float64)
    atf = A.adjoint(f)
    m = atf.copy() if m0 is None else np.array(m0, dtype=np.float64, copy=True)
    z = m.copy()
    beta = np.zeros_like(m)
    state = SolverState(m=m, z=z, beta=beta, iterates=[] if keep_iterates else None)
    warm = isinstance(A, FanBeamOperator)
    for _ in range(n_iters):
        rhs = atf + rho * (z - beta)
        m = A.normal_solve(rhs, rho, x0=m) if warm else A.normal_solve(rhs, rho)
        z = prox_l1(m + beta, cfg.lam / rho, psi)
        beta = beta + m - z
        state.iteration += 1
        state.objective_history.append(objective(A, f, m, cfg, psi))
        if keep_iterates:
            state.iterates.append(m.copy())
    state.m, state.z, state.beta = m, z, beta
    return state


def ista_solve(A, f, cfg, rho_step=None, n_iters=100, m0=None, op_norm=None, keep_iterates=False):
    """Proximal gradient: ``r = m - rho A^T (A m - f)``, ``m = Psi^T soft(Psi r, rho lam)``."""
    psi = cfg.make()
    _require_orthogonal(psi, "ista_solve")
    norm_a = _norm(A, op_norm)
    bound = 1.0 / norm_a ** 2 if norm_a > 0 else np.inf
    rho_step = bound if rho_step is None else float(rho_step)
    if rho_step <= 0 or rho_step > bound * (1.0 + 1e-9):
        raise ValueError(f"rho_step must lie in (0, 1/||A||^2 = {bound:.6g}], got {rho_step}")
    f = np.asarray(f, dtype=np.float64)
    m = A.adjoint(f) if m0 is None else np.array(m0, dtype=np.float64, copy=True)
    state = SolverState(m=m, iterates=[] if keep_iterates else None)
    for _ in range(n_iters):
        r = m - rho_step * A.adjoint(A.apply(m) - f)
        m = prox_l1(r, rho_step * cfg.lam, psi)
        state.iteration += 1
        state.objective_history.append(objective(A, f, m, cfg, psi))
        if keep_iterates:
            state.iterates.append(m.copy())
    state.m = m
    return state


# ---------------------------------------------------------------------------
# filtered backprojection
# ---------------------------------------------------------------------------

def ramp_filter_response(n, spacing, window="hamming"):
    """Frequency response (length ``P``, FFT order) of the windowed Ram-Lak filter.

    Built from the band-limited spatial kernel so the DC term is exact.
    ``P`` is the next power of two >= 2n.
    """
    size = 1 << int(np.ceil(np.log2(max(2 * n, 2))))
    idx = np.concatenate([np.arange(0, size // 2), np.arange(-size // 2, 0)])
    h = np.zeros(size)
    h[0] = 1.0 / (4.0 * spacing ** 2)
    odd = idx % 2 == 1
    h[odd] = -1.0 / (np.pi * idx[odd] * spacing) ** 2
    response = np.real(np.fft.fft(h)) * spacing
    if window == "hamming":
        freq = np.fft.fftfreq(size)
        response = response * (0.54 + 0.46 * np.cos(2.0 * np.pi * freq))
    elif window not in (None, "none", "ramlak"):
        raise ValueError(f"unknown window {window!r}")
    return response


def fbp_reconstruct(op, sinogram, window="hamming"):
    """Fan-beam FBP for a full circular scan with a flat detector.

    Each view is cosine pre-weighted, ramp filtered (Ram-Lak times Hamming)
    along the detector rescaled to the rotation center, and backprojected
    with the transpose of that view's rows of the system matrix. A per-pixel
    weight turns the transpose's implicit ``1 / L`` spread into the
    ``1 / L^2`` fan-beam weight, ``L`` being the source-to-pixel distance
    along the central ray.
    """
    sino = np.asarray(sinogram, dtype=np.float64)
    if sino.shape[-3:] != op.measurement_shape:
        raise ShapeError(f"sinogram shape {sino.shape} does not match {op.measurement_shape}")
    lead = sino.shape[:-3]
    sino = sino.reshape((-1,) + op.measurement_shape)[..., 0]
    sod, sdd = op.source_center_dist, op.source_detector_dist
    u = op.detector_offsets()
    s = u * sod / sdd
    ds = op.detector_pitch * sod / sdd
    cos_gamma = sod / np.sqrt(sod ** 2 + s ** 2)
    response = ramp_filter_response(op.n_detectors, ds, window)
    size = response.size
    q = sino * cos_gamma
    qf = np.real(np.fft.ifft(np.fft.fft(q, n=size, axis=-1) * response, axis=-1))[..., :op.n_detectors]
    scale = op.detector_pitch * sod / (op.pixel_pitch ** 2 * sdd)
    y = qf * cos_gamma * scale
    xs, ys = op.pixel_centers()
    dbeta = 2.0 * np.pi / op.n_views
    out = np.zeros((sino.shape[0], op.image_size, op.image_size))
    for v, beta in enumerate(op.view_angles):
        L = sod - (xs * np.cos(beta) + ys * np.sin(beta))
        rows = op.matrix[v * op.n_detectors:(v + 1) * op.n_detectors]
        bp = (rows.T @ y[:, v, :].T).T.reshape(-1, op.image_size, op.image_size)
        out += bp * (sod / L)
    out *= 0.5 * dbeta
    return out.reshape(lead + op.image_shape)


def zero_filled(A, f):
    """Adjoint reconstruction ``A^H f``."""
    return A.adjoint(f)


def is_fourier(A):
    return isinstance(A, FourierMaskOperator)
