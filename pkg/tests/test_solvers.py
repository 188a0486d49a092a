import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urcn.errors import ShapeError
from urcn.masks import make_poisson_disk_mask
from urcn.operators import FanBeamOperator, FourierMaskOperator, IdentityOperator, to_channels, to_complex
from urcn.simulation import disk_phantom, shepp_logan
from urcn.solvers import (SparsityConfig, admm_solve, duality_gap, fbp_reconstruct, ista_solve, objective,
                          pdhg_solve, soft)
from urcn.transforms import HaarWavelet

from helpers import LAM, haar_matrix, rel_err, solver_benchmark


@pytest.fixture(scope="module")
def bench():
    return solver_benchmark()


CFG = SparsityConfig("haar_wavelet", LAM)


def test_oracle_haar_matches_library_haar():
    x = np.random.default_rng(0).normal(size=(16, 16, 1))
    np.testing.assert_allclose((haar_matrix(16) @ x.ravel()).reshape(16, 16, 1), HaarWavelet().forward(x),
                               atol=1e-12)


def test_pdhg_matches_oracle_and_gap_closes(bench):
    A, f, ref = bench
    st_ = pdhg_solve(A, f, CFG, n_iters=2000)
    assert abs(st_.objective_history[-1] - ref) <= 1e-4 * ref
    gaps = np.array(st_.gap_history)
    assert np.all(gaps >= 0)
    initial = duality_gap(A, f, A.adjoint(f), np.zeros_like(f), CFG, CFG.make())
    assert gaps.min() < 1e-6 * initial


def test_admm_matches_oracle(bench):
    A, f, ref = bench
    st_ = admm_solve(A, f, CFG, rho=1.0, n_iters=2000)
    assert abs(st_.objective_history[-1] - ref) <= 1e-3 * ref


def test_ista_matches_oracle_and_is_monotone(bench):
    A, f, ref = bench
    st_ = ista_solve(A, f, CFG, n_iters=3000)
    hist = np.array(st_.objective_history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert abs(hist[-1] - ref) <= 1e-3 * ref


def test_three_solvers_agree(bench):
    A, f, _ = bench
    vals = [pdhg_solve(A, f, CFG, n_iters=2000).objective_history[-1],
            admm_solve(A, f, CFG, n_iters=2000).objective_history[-1],
            ista_solve(A, f, CFG, n_iters=3000).objective_history[-1]]
    assert max(vals) - min(vals) <= 1e-3 * min(vals)


def test_pdhg_unregularized_full_sampling_recovers_image():
    rng = np.random.default_rng(1)
    A = FourierMaskOperator(np.ones((16, 16), bool))
    m_true = rng.normal(size=(16, 16, 2))
    st_ = pdhg_solve(A, A.apply(m_true), SparsityConfig("haar_wavelet", 0.0), n_iters=200, m0=np.zeros_like(m_true))
    assert rel_err(st_.m, m_true) < 1e-6


def test_pdhg_sigma_zero_keeps_dual():
    rng = np.random.default_rng(2)
    A = FourierMaskOperator(rng.random((8, 8)) < 0.5)
    f = A.apply(rng.normal(size=(8, 8, 2)))
    st_ = pdhg_solve(A, f, CFG, sigma=0.0, tau=0.5, n_iters=20)
    assert not st_.d.any()


def test_pdhg_argument_errors():
    A = FourierMaskOperator(np.ones((8, 8), bool))
    f = np.zeros((8, 8, 2))
    with pytest.raises(ValueError):
        pdhg_solve(A, f, CFG, sigma=2.0, tau=2.0)
    with pytest.raises(ValueError):
        pdhg_solve(A, f, CFG, theta_pdhg=1.5)


def test_pdhg_finite_differences_runs_and_decreases():
    rng = np.random.default_rng(3)
    A = FourierMaskOperator(rng.random((16, 16)) < 0.5)
    f = A.apply(to_channels(shepp_logan(16) + 0j))
    st_ = pdhg_solve(A, f, SparsityConfig("finite_differences", 1e-2), n_iters=300)
    assert st_.objective_history[-1] < objective(A, f, A.adjoint(f), SparsityConfig("finite_differences", 1e-2))


def test_admm_first_update_is_adjoint_for_tiny_rho():
    rng = np.random.default_rng(4)
    A = FourierMaskOperator(np.ones((8, 8), bool))
    f = A.apply(rng.normal(size=(8, 8, 2)))
    st_ = admm_solve(A, f, CFG, rho=1e-12, n_iters=1, keep_iterates=True)
    assert rel_err(st_.iterates[0], to_channels(np.fft.ifft2(to_complex(f), norm="ortho"))) < 1e-10


def test_admm_without_threshold_keeps_beta_zero():
    rng = np.random.default_rng(5)
    A = FourierMaskOperator(rng.random((8, 8)) < 0.5)
    f = A.apply(rng.normal(size=(8, 8, 2)))
    st_ = admm_solve(A, f, SparsityConfig("haar_wavelet", 0.0), n_iters=10)
    np.testing.assert_allclose(st_.z, st_.m + 0.0, atol=1e-12)
    assert np.abs(st_.beta).max() < 1e-12


def test_admm_argument_errors():
    A = FourierMaskOperator(np.ones((8, 8), bool))
    with pytest.raises(ValueError):
        admm_solve(A, np.zeros((8, 8, 2)), CFG, rho=0.0)
    with pytest.raises(ValueError):
        admm_solve(A, np.zeros((8, 8, 2)), SparsityConfig("finite_differences"))


def test_ista_identity_fixed_point():
    rng = np.random.default_rng(6)
    f = rng.normal(size=(8, 8, 1))
    cfg = SparsityConfig("identity", 0.3)
    st_ = ista_solve(IdentityOperator((8, 8, 1)), f, cfg, rho_step=1.0, n_iters=5, keep_iterates=True)
    for m in st_.iterates:
        np.testing.assert_allclose(m, soft(f, 0.3), atol=1e-15)


def test_ista_full_sampling_one_step_is_adjoint():
    rng = np.random.default_rng(7)
    A = FourierMaskOperator(np.ones((8, 8), bool))
    f = A.apply(rng.normal(size=(8, 8, 2)))
    st_ = ista_solve(A, f, SparsityConfig("haar_wavelet", 0.0), n_iters=1, m0=np.zeros((8, 8, 2)))
    assert rel_err(st_.m, A.adjoint(f)) < 1e-12


def test_ista_step_too_large():
    A = FourierMaskOperator(np.ones((8, 8), bool))
    with pytest.raises(ValueError):
        ista_solve(A, np.zeros((8, 8, 2)), CFG, rho_step=1.5)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), step=st.floats(0.05, 1.0), lam=st.floats(1e-4, 0.1))
def test_ista_monotone_for_any_valid_step(seed, step, lam):
    rng = np.random.default_rng(seed)
    A = FourierMaskOperator(rng.random((8, 8)) < 0.4)
    f = A.apply(rng.normal(size=(8, 8, 2)))
    hist = np.array(ista_solve(A, f, SparsityConfig("haar_wavelet", lam), rho_step=step, n_iters=30)
                    .objective_history)
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))


# -- filtered backprojection -----------------------------------------------------------

def _fbp_error(n_views, size=64, radius=20):
    op = FanBeamOperator(image_size=size, n_views=n_views)
    disk = disk_phantom(size, radius)
    rec = fbp_reconstruct(op, op.apply(disk[..., None]))[..., 0]
    yy, xx = np.mgrid[:size, :size] - (size - 1) / 2
    support = np.hypot(yy, xx) < 0.45 * size
    return np.linalg.norm((rec - disk)[support]) / np.linalg.norm(disk[support])


def test_fbp_zero_and_shape_error():
    op = FanBeamOperator(image_size=16, n_views=30)
    assert not fbp_reconstruct(op, np.zeros(op.measurement_shape)).any()
    with pytest.raises(ShapeError):
        fbp_reconstruct(op, np.zeros((29, 300, 1)))


def test_fbp_full_view_accuracy_and_sparse_view_degradation():
    full = _fbp_error(360)
    sparse = _fbp_error(90)
    assert full < 0.05
    assert sparse > full
