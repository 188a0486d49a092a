import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urcn.errors import TuningError
from urcn.masks import center_square, make_poisson_disk_mask


def test_full_sampling_is_all_true():
    m = make_poisson_disk_mask(32, 24, 1.0)
    assert m.mask.shape == (32, 24) and m.mask.all()


def test_six_fold_256_fraction():
    m = make_poisson_disk_mask(256, 256, 6.0, center_fraction=0.04, seed=0)
    assert 0.150 <= m.sampled_fraction <= 0.183
    assert m.sampled_fraction == pytest.approx(m.mask.sum() / 256**2)


def test_same_seed_same_mask_and_different_seed_differs():
    a = make_poisson_disk_mask(64, 64, 4.0, seed=7)
    b = make_poisson_disk_mask(64, 64, 4.0, seed=7)
    c = make_poisson_disk_mask(64, 64, 4.0, seed=8)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert (a.mask != c.mask).any()


def test_backends_give_identical_masks():
    from urcn import _backend
    if _backend.compiled_kernels is None:
        pytest.skip("extension not built")
    a = make_poisson_disk_mask(48, 40, 3.0, seed=3, backend="compiled")
    b = make_poisson_disk_mask(48, 40, 3.0, seed=3, backend="python")
    np.testing.assert_array_equal(a.mask, b.mask)


def test_center_square_is_fully_sampled_and_dc_sampled():
    m = make_poisson_disk_mask(64, 64, 4.0, center_fraction=0.1, seed=1)
    assert m.centered()[center_square(64, 64, 0.1)].all()
    assert m.mask[0, 0]


def test_density_decreases_away_from_center():
    m = make_poisson_disk_mask(128, 128, 4.0, center_fraction=0.0, seed=2).centered()
    yy, xx = np.mgrid[:128, :128] - 64
    r = np.hypot(yy, xx)
    inner, outer = m[r < 20].mean(), m[(r > 44) & (r < 64)].mean()
    assert inner > outer


def test_invalid_arguments():
    with pytest.raises(ValueError):
        make_poisson_disk_mask(16, 16, 0.5)
    with pytest.raises(ValueError):
        make_poisson_disk_mask(16, 16, 2.0, center_fraction=0.5)
    with pytest.raises(TuningError):
        make_poisson_disk_mask(20, 20, 20.0, center_fraction=0.25)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), accel=st.floats(2.0, 8.0))
def test_fraction_within_tolerance(seed, accel):
    m = make_poisson_disk_mask(64, 64, accel, seed=seed)
    assert 0.9 / accel <= m.sampled_fraction <= 1.1 / accel
