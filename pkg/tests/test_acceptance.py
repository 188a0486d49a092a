"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected again in the terminal summary (see ``conftest.py``).
The two training criteria dominate the runtime (roughly 10 minutes each on
one CPU core).
"""
import time

import numpy as np
import pytest

from urcn import autodiff as ad
from urcn import metrics as mt
from urcn.masks import make_poisson_disk_mask
from urcn.nets import (ADMMNet, ISTANet, PDHGNet, build_network, freeze_dual_to_analytic,
                       freeze_fidelity_to_exact_solve, freeze_fidelity_to_residual)
from urcn.operators import FanBeamOperator, FourierMaskOperator, inner
from urcn.simulation import build_dataset, disk_phantom, shepp_logan, simulate_split
from urcn.solvers import SparsityConfig, admm_solve, duality_gap, fbp_reconstruct, ista_solve, pdhg_solve
from urcn.training import AdamConfig, LossConfig, loss_and_grad, total_loss, train

from helpers import LAM, coordinate_check, numeric_grad, rel_err, solver_benchmark

FAMILIES = ("pdhg", "admm", "ista")
NINE = [(f, s) for f in FAMILIES for s in ("I", "II", "III")]


def _forward(net, A, f):
    with ad.no_grad():
        out, its = net.forward(A, f, return_iterates=True)
    return out.data, [t.data for t in its]


def _copy_shared(src, dst):
    for name, t in src.params.items():
        if name in dst.params:
            dst.params[name].data = t.data.copy()


def _mri_problem(n=16, acceleration=2.0, seed=0):
    mask = make_poisson_disk_mask(n, n, acceleration, seed=seed).mask if acceleration > 1 else np.ones((n, n), bool)
    A = FourierMaskOperator(mask)
    img = shepp_logan(n)
    return A, A.apply(np.stack([img * np.cos(0.4), img * np.sin(0.4)], axis=-1))


# -- 1 ---------------------------------------------------------------------------------

def test_criterion_01_adjoint_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    fourier = []
    for h, w in [(8, 8), (16, 12), (31, 17), (64, 64)]:
        op = FourierMaskOperator(rng.random((h, w)) < 0.3)
        x, y = rng.normal(size=(2, h, w, 2))
        lhs, rhs = inner(op.apply(x), y), inner(x, op.adjoint(y))
        fourier.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs)))

    op = FanBeamOperator(image_size=8, n_views=12, n_detectors=40, detector_pitch=2.0)
    dense = np.stack([op.apply(e.reshape(8, 8, 1)).ravel() for e in np.eye(64)], axis=1)
    fan = []
    for _ in range(5):
        x = rng.normal(size=(8, 8, 1))
        y = rng.normal(size=op.measurement_shape)
        lhs, rhs = inner(op.apply(x), y), inner(x, op.adjoint(y))
        fan.append(abs(lhs - rhs) / abs(lhs))
        fan.append(rel_err(op.adjoint(y).ravel(), dense.T @ y.ravel()))
        fan.append(rel_err(op.apply(x).ravel(), dense @ x.ravel()))
    elapsed = time.perf_counter() - t0
    ok = max(fourier) < 1e-10 and max(fan) < 1e-8 and elapsed < 10
    report(1, ok, f"Fourier adjoint err {max(fourier):.1e}, fan-beam vs dense {max(fan):.1e}, {elapsed:.1f}s")
    assert ok


# -- 2 ---------------------------------------------------------------------------------

def _op_cases(rng):
    def leaf(shape):
        return ad.Tensor(rng.uniform(-1, 1, shape), requires_grad=True)

    def scalar(v):
        return ad.Tensor(np.array(v), requires_grad=True)

    away = leaf((5, 5))
    away.data[np.abs(away.data) < 0.05] = 0.5
    st_x = leaf((6, 6))
    st_x.data[np.abs(np.abs(st_x.data) - 0.3) < 0.05] = 0.9
    fourier = FourierMaskOperator(rng.random((6, 6)) < 0.5)
    fan = FanBeamOperator(image_size=8, n_views=12, n_detectors=40, detector_pitch=2.0)
    return {
        "add": (ad.add, [leaf((3, 4)), leaf((3, 4))]),
        "sub": (ad.sub, [leaf((3, 4)), leaf((3, 4))]),
        "neg": (ad.neg, [leaf((3, 4))]),
        "scalar_mul": (ad.scalar_mul, [scalar(0.7), leaf((3, 4))]),
        "scalar_div": (lambda x, s: ad.scalar_div(x, s), [leaf((3, 4)), scalar(1.9)]),
        "relu": (ad.relu, [away]),
        "softplus": (ad.softplus, [leaf((5, 5))]),
        "soft_threshold": (ad.soft_threshold, [st_x, scalar(0.3)]),
        "sum": (lambda x: ad.scalar_mul(1.0, ad.sum(x)), [leaf((4, 3))]),
        "sum_squares": (ad.sum_squares, [leaf((4, 3))]),
        "concat_channels": (lambda a, b: ad.concat_channels([a, b]), [leaf((4, 4, 2)), leaf((4, 4, 3))]),
        "slice_channels": (lambda x: ad.slice_channels(x, 1, 3), [leaf((4, 4, 3))]),
        "conv2d": (ad.conv2d, [leaf((2, 6, 6, 2)), leaf((3, 3, 2, 3)), leaf((3,))]),
        "linear_op_apply[fourier]": (lambda x: ad.linear_op_apply(fourier, x), [leaf((6, 6, 2))]),
        "linear_op_adjoint[fourier]": (lambda y: ad.linear_op_adjoint(fourier, y), [leaf((6, 6, 2))]),
        "linear_op_apply[fanbeam]": (lambda x: ad.linear_op_apply(fan, x), [leaf((8, 8, 1))]),
        "linear_op_adjoint[fanbeam]": (lambda y: ad.linear_op_adjoint(fan, y), [leaf(fan.measurement_shape)]),
        "normal_solve": (lambda b, r: ad.normal_solve(fourier, b, r), [leaf((6, 6, 2)), scalar(0.8)]),
    }


def _op_error(build, leaves, rng):
    out = build(*leaves)
    w = rng.uniform(-1, 1, np.shape(out.data))
    # <out, w> through the engine: 0.5 (|out + w|^2 - |out|^2) - 0.5 |w|^2
    loss = ad.scalar_mul(0.5, ad.sum_squares(out + ad.Tensor(w)) - ad.sum_squares(out))
    for t in leaves:
        t.grad = None
    loss.backward()

    def value():
        with ad.no_grad():
            return float(np.sum(w * build(*leaves).data))

    return max(rel_err(t.grad, numeric_grad(value, t.data, 1e-5)) for t in leaves)


def test_criterion_02_gradient_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    op_errs = {name: _op_error(build, leaves, rng) for name, (build, leaves) in _op_cases(rng).items()}

    ds = simulate_split("mri", 2, 21, size=16, acceleration=2.0)
    A, f, ref = ds.batch([0, 1])
    net_errs, checked = {}, 0
    for family, state in NINE:
        net = build_network(family, state, n_stages=2, seed=5)
        cfg = LossConfig.for_network(net)
        loss_and_grad(net, A, f, ref, cfg)
        analytic = {name: t.grad.copy() for name, t in net.params.items()}

        def value(net=net, cfg=cfg):
            with ad.no_grad():
                return float(total_loss(net, net(A, f), ref, cfg)[0].data)

        err, _, n_checked, _ = coordinate_check(dict(net.params.items()), value, analytic, rng, n_coords=3)
        net_errs[f"{family}-{state}"] = err
        checked += n_checked
    elapsed = time.perf_counter() - t0
    worst_op = max(op_errs, key=op_errs.get)
    worst_net = max(net_errs, key=net_errs.get)
    ok = max(op_errs.values()) < 1e-3 and max(net_errs.values()) < 1e-3 and elapsed < 300
    report(2, ok, f"{len(op_errs)} ops (worst {worst_op} {op_errs[worst_op]:.1e}), nine nets "
                  f"({checked} coordinates, worst {worst_net} {net_errs[worst_net]:.1e}), {elapsed:.0f}s")
    assert ok, (op_errs, net_errs)


# -- 3 ---------------------------------------------------------------------------------

def test_criterion_03_classical_solver_equivalence(report):
    t0 = time.perf_counter()
    A, f, oracle = solver_benchmark()
    cfg = SparsityConfig("haar_wavelet", LAM)
    pd = pdhg_solve(A, f, cfg, n_iters=2000)
    adm = admm_solve(A, f, cfg, rho=1.0, n_iters=500)
    ist = ista_solve(A, f, cfg, n_iters=2000)
    errs = {name: abs(s.objective_history[-1] - oracle) / oracle
            for name, s in (("PDHG", pd), ("ADMM", adm), ("ISTA", ist))}
    hist = np.array(ist.objective_history)
    monotone = bool(np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1])))
    initial_gap = duality_gap(A, f, A.adjoint(f), np.zeros_like(f), cfg, cfg.make())
    gap_ratio = min(pd.gap_history) / initial_gap
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-3 and monotone and gap_ratio < 1e-6 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    report(3, ok, f"objective rel. err vs oracle: {detail}; ISTA monotone={monotone}; "
                  f"PDHG gap ratio {gap_ratio:.1e}; {elapsed:.0f}s")
    assert ok


# -- 4 ---------------------------------------------------------------------------------

def _reductions():
    errs = {}
    A, f = _mri_problem(seed=1)
    lam, tau = 0.05, 0.5
    net = PDHGNet("I", 10)
    for st in net.stages:
        st.modules["Lambda"].set_soft_threshold(tau * lam)
    ref = pdhg_solve(A, f, SparsityConfig("identity", lam), sigma=0.5, tau=tau, theta_pdhg=1.0,
                     n_iters=10, keep_iterates=True).iterates
    errs["PDHG-I"] = max(rel_err(a, b) for a, b in zip(_forward(net, A, f)[1], ref))

    worst = 0.0
    for accel in (1.0, 2.0):
        A, f = _mri_problem(seed=3, acceleration=accel)
        net = ADMMNet("I", 15)
        for name, v in (("lambda_tilde", 0.0), ("mu1", 0.0), ("mu2", 1.0), ("eta_tilde", 1.0), ("rho", 1.0)):
            net.set_scalar(name, v)
        ref = admm_solve(A, f, SparsityConfig("haar_wavelet", 0.0), rho=1.0, n_iters=15, keep_iterates=True).iterates
        worst = max(worst, max(rel_err(a, b) for a, b in zip(_forward(net, A, f)[1], ref)))
    errs["ADMM-I"] = worst

    A, f = _mri_problem(seed=4)
    lam, step = 0.02, 1.0
    net = ISTANet("I", 10)
    for st in net.stages:
        st.modules["G"].set_identity()
        st.modules["G_tilde"].set_identity()
    net.set_scalar("rho_step", step)
    net.set_scalar("theta_shrink", step * lam)
    ref = ista_solve(A, f, SparsityConfig("identity", lam), rho_step=step, n_iters=10, keep_iterates=True).iterates
    errs["ISTA-I"] = max(rel_err(a, b) for a, b in zip(_forward(net, A, f)[1], ref))

    for label, cls, n, freeze, accel in (("PDHG-II", PDHGNet, 10, freeze_dual_to_analytic, 2.0),
                                         ("ADMM-II", ADMMNet, 15, freeze_fidelity_to_exact_solve, 1.0),
                                         ("ISTA-II", ISTANet, 10, freeze_fidelity_to_residual, 2.0)):
        A, f = _mri_problem(seed=6, acceleration=accel)
        one, two = cls("I", n, seed=1), cls("II", n, seed=2)
        _copy_shared(one, two)
        freeze(two)
        errs[label] = max(rel_err(a, b) for a, b in zip(_forward(one, A, f)[1], _forward(two, A, f)[1]))
    return errs


def test_criterion_04_reduction_suite(report):
    t0 = time.perf_counter()
    errs = _reductions()
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-10 and elapsed < 60
    report(4, ok, "stage-wise rel. err " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
           + f"; {elapsed:.1f}s")
    assert ok


# -- 5 ---------------------------------------------------------------------------------

def test_criterion_05_parameter_count_ordering(report):
    rows, ok = [], True
    for channels in (1, 2):
        for family in FAMILIES:
            c = {s: build_network(family, s, channels=channels).parameter_count() for s in ("I", "II", "III")}
            ok &= c["I"] < c["II"] <= c["III"]
            rows.append(f"{family}(c={channels}) {c['I']}<{c['II']}<={c['III']}")
        star = build_network("pdhg", "I_star", channels=channels).parameter_count()
        two = build_network("pdhg", "II", channels=channels).parameter_count()
        ok &= star == two
        rows.append(f"pdhg I*(c={channels}) {star}=={two}")
    report(5, ok, "; ".join(rows))
    assert ok


# -- 6 ---------------------------------------------------------------------------------

def _mean_psnr(net, ds):
    net_psnr, zf_psnr = [], []
    with ad.no_grad():
        for i in range(len(ds)):
            A, f, ref = ds.batch([i])
            net_psnr.append(mt.psnr(net(A, f).data[0], ref[0]))
            zf_psnr.append(mt.psnr(A.adjoint(f)[0], ref[0]))
    return float(np.mean(net_psnr)), float(np.mean(zf_psnr))


@pytest.mark.slow
def test_criterion_06_desk_scale_training_trend(report):
    epochs = 2
    train_set = simulate_split("mri", 300, 11, size=64, acceleration=4)
    val_set = simulate_split("mri", 30, 13, size=64, acceleration=4)
    test_set = simulate_split("mri", 30, 12, size=64, acceleration=4)
    rows, ok = [], True
    for family in FAMILIES:
        net = build_network(family, "I", channels=2, seed=0)
        t0 = time.perf_counter()
        result = train(net, train_set, val_set, epochs=epochs, seed=0)
        elapsed = time.perf_counter() - t0
        net.params.load_state_dict(result.checkpoint)
        net_psnr, zf_psnr = _mean_psnr(net, test_set)
        gain = net_psnr - zf_psnr
        ok &= gain >= 2.0 and elapsed < 1800
        rows.append(f"{family}-I {net_psnr:.2f} dB vs zero-filled {zf_psnr:.2f} dB "
                    f"(+{gain:.2f}) in {elapsed:.0f}s")
    report(6, ok, f"{epochs} epochs, 300 samples 64x64 R=4: " + "; ".join(rows))
    assert ok


# -- 7 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_overfit_smoke_test(report):
    ds = simulate_split("mri", 4, 3, size=32)
    ratios = {}
    t0 = time.perf_counter()
    for family, state in NINE:
        net = build_network(family, state, channels=2, seed=0)
        curve = train(net, ds, None, adam_cfg=AdamConfig(lr=3e-3), epochs=200, seed=0).curve
        mses = [row[2] for row in curve]
        ratios[f"{family}-{state}"] = min(mses) / mses[0]
    elapsed = time.perf_counter() - t0
    worst = max(ratios, key=ratios.get)
    ok = ratios[worst] < 0.1
    report(7, ok, f"min MSE / epoch-1 MSE over 200 epochs, worst {worst} {ratios[worst]:.3f}; "
                  + ", ".join(f"{k} {v:.3f}" for k, v in ratios.items()) + f"; {elapsed:.0f}s")
    assert ok


# -- 8 ---------------------------------------------------------------------------------

def test_criterion_08_ct_pipeline(report):
    size = 128
    disk = disk_phantom(size, 0.3 * size)
    yy, xx = np.mgrid[:size, :size] - (size - 1) / 2
    support = np.hypot(yy, xx) < 0.45 * size

    def support_error(rec):
        return float(np.linalg.norm((rec - disk)[support]) / np.linalg.norm(disk[support]))

    full = FanBeamOperator(image_size=size, n_views=360)
    sparse = FanBeamOperator(image_size=size, n_views=90)
    err_full = support_error(fbp_reconstruct(full, full.apply(disk[..., None]))[..., 0])
    sino = sparse.apply(disk[..., None])
    fbp = fbp_reconstruct(sparse, sino)[..., 0]
    err_sparse = support_error(fbp)
    admm = admm_solve(sparse, sino, SparsityConfig("haar_wavelet", 1e-2), rho=1.0, n_iters=50).m[..., 0]
    p_fbp, p_admm = mt.psnr(fbp, disk), mt.psnr(admm, disk)
    ok = err_sparse > err_full and err_full < 0.05 and p_admm > p_fbp
    report(8, ok, f"FBP support error 360 views {err_full:.4f}, 90 views {err_sparse:.4f}; "
                  f"90-view PSNR ADMM {p_admm:.1f} dB vs FBP {p_fbp:.1f} dB")
    assert ok


# -- 9 ---------------------------------------------------------------------------------

def test_criterion_09_metrics_suite(report):
    rng = np.random.default_rng(9)
    ok = True
    for img in (shepp_logan(64), rng.random((32, 48, 2))):
        esp = mt.error_spectrum(img, img)
        ok &= mt.psnr(img, img) == float("inf") and mt.ssim(img, img) == 1.0
        ok &= all(v == 0.0 for _, v in esp if np.isfinite(v))
    parseval = 0.0
    for shape in ((32, 32, 2), (31, 20, 2), (64, 64, 1)):
        x, ref = rng.normal(size=(2,) + shape)
        err, ref_e = mt.spectrum_energies(x, ref)
        zx, zr = mt.as_complex(x), mt.as_complex(ref)
        parseval = max(parseval, rel_err(err.sum(), np.sum(np.abs(zx - zr) ** 2)),
                       rel_err(ref_e.sum(), np.sum(np.abs(zr) ** 2)))
    ok &= parseval < 1e-8

    # the increasing-error trend is reported only
    ds = simulate_split("mri", 1, 31, size=64, acceleration=4)
    A, f, ref = ds.batch([0])
    trends = {"zero-filled": mt.spectrum_trend(mt.error_spectrum(A.adjoint(f)[0], ref[0]))}
    rec = admm_solve(A, f, SparsityConfig("haar_wavelet", 1e-3), rho=1.0, n_iters=30).m
    trends["ADMM"] = mt.spectrum_trend(mt.error_spectrum(rec[0], ref[0]))
    trend_txt = ", ".join(f"{k} slope {t['slope']:+.4f} increasing {t['increasing_fraction']:.2f} "
                          f"monotone={t['monotone']}" for k, t in trends.items())
    report(9, ok, f"identities hold, Parseval rel. err {parseval:.1e}; ESP trend (reported) {trend_txt}")
    assert ok


# -- 10 --------------------------------------------------------------------------------

def _read_all(paths):
    out = {}
    for split, p in paths.items():
        with open(p, "rb") as fh:
            out[split] = fh.read()
    return out


def test_criterion_10_determinism(report, tmp_path):
    same_arrays = True
    for modality in ("mri", "ct"):
        a = simulate_split(modality, 3, 5, size=16, n_views=20)
        b = simulate_split(modality, 3, 5, size=16, n_views=20)
        same_arrays &= a.f.tobytes() == b.f.tobytes() and a.m_ref.tobytes() == b.m_ref.tobytes()
    same_files = (_read_all(build_dataset(tmp_path / "a", 3, 2, 2, seed=7, size=16))
                  == _read_all(build_dataset(tmp_path / "b", 3, 2, 2, seed=7, size=16)))

    ds = simulate_split("mri", 4, 8, size=16)
    runs = []
    for _ in range(2):
        runs.append({})
        for family in FAMILIES:
            net = build_network(family, "II", n_stages=2, seed=3)
            r = train(net, ds, ds.subset([0, 1]), epochs=3, seed=4)
            runs[-1][family] = (r.curve, {k: v.tobytes() for k, v in r.final_state.items()})
    same_training = runs[0] == runs[1]
    ok = same_arrays and same_files and same_training
    report(10, ok, f"simulated arrays identical={same_arrays}, dataset files identical={same_files}, "
                   f"training curves and weights identical={same_training}")
    assert ok
