import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import cumulative_trapezoid

from ktsecret.kinetics import evaluate_series, nrmse, patlak_fit, psnr, ssim
from ktsecret.phantom import PhantomSpec, gamma_variate_aif, synthesize


def _aif(t=20, dt=2.0):
    t_axis = np.arange(t) * dt
    return gamma_variate_aif(t_axis, t0=4.0, alpha=2.0, beta=5.0, scale=3.0), dt


def test_patlak_exact_on_synthetic_linear_curves():
    aif, dt = _aif()
    t_min = np.arange(len(aif)) * dt / 60.0
    int_aif = cumulative_trapezoid(aif, t_min, initial=0.0)
    curve = 0.3 * int_aif + 0.1 * aif
    series = np.tile(curve[:, None, None], (1, 4, 4)).astype(complex)
    pmap = patlak_fit(series, aif, dt, np.ones((4, 4), dtype=bool))
    assert_allclose(pmap.ktrans, 0.3, atol=1e-8)
    assert_allclose(pmap.vp, 0.1, atol=1e-8)
    assert np.all(pmap.fit_r2 >= 1 - 1e-10)


def test_patlak_zero_series():
    aif, dt = _aif()
    series = np.zeros((len(aif), 4, 4), dtype=complex)
    pmap = patlak_fit(series, aif, dt, np.ones((4, 4), dtype=bool))
    assert np.abs(pmap.ktrans).max() == 0.0
    assert np.abs(pmap.vp).max() == 0.0


def test_patlak_phantom_round_trip():
    spec = PhantomSpec(h=64, w=64, t=16, dt=2.0, seed=7)
    truth = synthesize(spec)
    pmap = patlak_fit(truth.ref_images, truth.aif_signal, spec.dt, truth.tissue_roi)
    roi = truth.tissue_roi
    err = np.linalg.norm(pmap.ktrans[roi] - truth.ktrans_map[roi]) / np.linalg.norm(truth.ktrans_map[roi])
    assert err < 0.05
    assert not np.any(np.isnan(pmap.ktrans[pmap.mask_roi]))


def test_patlak_singular_design_flags_pixels():
    # only one usable frame: the design matrix cannot be rank 2
    aif = np.zeros(10)
    aif[-1] = 1.0
    series = np.ones((10, 2, 2), dtype=complex)
    pmap = patlak_fit(series, aif, 2.0, np.ones((2, 2), dtype=bool))
    assert np.all(np.isnan(pmap.ktrans))
    assert not pmap.mask_roi.any()


def test_patlak_rejects_zero_aif():
    with pytest.raises(ValueError):
        patlak_fit(np.ones((5, 2, 2), dtype=complex), np.zeros(5), 1.0, np.ones((2, 2), dtype=bool))


def test_psnr_identical_is_inf(rng):
    x = rng.uniform(size=(3, 8, 8))
    assert psnr(x, x) == float("inf")


def test_psnr_closed_form_20db():
    ref = np.zeros((1, 8, 8))
    ref[0, 0, 0] = 1.0  # peak 1
    x = ref + 0.1
    assert psnr(x, ref) == pytest.approx(20.0, abs=1e-12)


def test_psnr_matches_direct_formula(rng):
    x = rng.uniform(size=(2, 8, 8))
    ref = rng.uniform(size=(2, 8, 8))
    expected = 10 * np.log10(ref.max() ** 2 / np.mean((x - ref) ** 2))
    assert psnr(x, ref) == pytest.approx(expected, rel=1e-12)


def test_ssim_self_is_one(rng):
    x = rng.uniform(size=(2, 16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_affine_distortion_below_one(rng):
    ref = rng.uniform(size=(1, 32, 32))
    x = 1.5 * ref + 0.1
    assert ssim(x, ref) < 1.0


def test_ssim_constant_patch_hand_value():
    a, b = 0.5, 0.25
    x = np.full((8, 8), a)
    ref = np.full((8, 8), b)
    L = b
    c1 = (0.01 * L) ** 2
    # variances are zero, so the structure/contrast term cancels
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert ssim(x, ref) == pytest.approx(expected, rel=1e-12)


def test_ssim_symmetric_with_shared_data_range(rng):
    x = rng.uniform(size=(1, 16, 16))
    y = rng.uniform(size=(1, 16, 16))
    assert ssim(x, y, data_range=1.0) == pytest.approx(ssim(y, x, data_range=1.0), rel=1e-12)


def test_nrmse_basics(rng):
    ref = rng.uniform(0.5, 1.0, size=(2, 8, 8))
    assert nrmse(ref, ref) == 0.0
    assert nrmse(np.zeros_like(ref), ref) == pytest.approx(1.0, rel=1e-12)
    assert nrmse(1.1 * ref, ref) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ValueError):
        nrmse(ref, np.zeros_like(ref))


def test_psnr_nrmse_monotone_relation(rng):
    ref = rng.uniform(0.2, 1.0, size=(2, 16, 16))
    candidates = [ref + eps * rng.standard_normal(ref.shape) for eps in (0.01, 0.05, 0.2)]
    psnrs = [psnr(c, ref) for c in candidates]
    nrmses = [nrmse(np.abs(c), ref) for c in candidates]
    assert np.argsort(psnrs).tolist() == np.argsort(nrmses)[::-1].tolist()


def test_evaluate_series_aggregates_are_frame_means(rng):
    x = rng.uniform(size=(4, 16, 16))
    ref = rng.uniform(size=(4, 16, 16))
    report = evaluate_series(x, ref)
    assert len(report.psnr_frames) == 4
    assert report.psnr == pytest.approx(np.mean(report.psnr_frames))
    assert report.ssim == pytest.approx(np.mean(report.ssim_frames))
    assert report.nrmse == pytest.approx(np.mean(report.nrmse_frames))
