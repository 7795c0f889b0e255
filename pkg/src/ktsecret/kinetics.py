"""Patlak quantification and image-quality metrics (PSNR, SSIM, NRMSE).

The Patlak fit is an ordinary least-squares regression of each pixel's
time-curve against [integral of the AIF, AIF], restricted to frames where the
AIF exceeds 5% of its peak (pre-contrast frames carry no kinetic
information). Magnitudes of complex series are used as tissue curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import fftconvolve

__all__ = ["PatlakMap", "MetricsReport", "patlak_fit", "psnr", "ssim", "nrmse", "evaluate_series"]


@dataclass
class PatlakMap:
    ktrans: np.ndarray  # [H,W], 1/min
    vp: np.ndarray  # [H,W]
    fit_r2: np.ndarray  # [H,W], in [0,1] inside the ROI
    mask_roi: np.ndarray  # binary [H,W]


@dataclass
class MetricsReport:
    psnr_frames: np.ndarray
    ssim_frames: np.ndarray
    nrmse_frames: np.ndarray

    @property
    def psnr(self) -> float:
        return float(np.mean(self.psnr_frames))

    @property
    def ssim(self) -> float:
        return float(np.mean(self.ssim_frames))

    @property
    def nrmse(self) -> float:
        return float(np.mean(self.nrmse_frames))


def patlak_fit(series: np.ndarray, aif: np.ndarray, dt: float, roi: np.ndarray) -> PatlakMap:
    """Pixelwise Patlak regression inside a binary ROI.

    dt is the frame spacing in seconds; the AIF integral is taken in minutes
    so the fitted slope is in 1/min. Pixels with a singular design matrix are
    set to NaN and dropped from the ROI.
    """
    series = np.asarray(series)
    aif = np.asarray(aif, dtype=float)
    roi = np.asarray(roi, dtype=bool)
    t, h, w = series.shape
    if t < 3:
        raise ValueError("need at least 3 frames")
    if not np.any(aif != 0):
        raise ValueError("AIF is identically zero")

    t_axis_min = np.arange(t) * dt / 60.0
    int_aif = cumulative_trapezoid(aif, t_axis_min, initial=0.0)
    use = aif > 0.05 * aif.max()
    x = np.stack([int_aif[use], aif[use]], axis=1)  # [F,2]
    y = np.abs(series)[use][:, roi]  # [F,Npix]

    xtx = x.T @ x
    ktrans = np.zeros((h, w))
    vp = np.zeros((h, w))
    r2 = np.zeros((h, w))
    roi_out = roi.copy()
    if x.shape[0] < 2 or np.linalg.matrix_rank(xtx) < 2:
        ktrans[roi] = np.nan
        vp[roi] = np.nan
        r2[roi] = np.nan
        roi_out[roi] = False
        return PatlakMap(ktrans, vp, r2, roi_out)

    beta = np.linalg.solve(xtx, x.T @ y)  # [2,Npix]
    resid = y - x @ beta
    ss_res = (resid ** 2).sum(axis=0)
    ss_tot = ((y - y.mean(axis=0)) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2_pix = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    ktrans[roi] = beta[0]
    vp[roi] = beta[1]
    r2[roi] = np.clip(r2_pix, 0.0, 1.0)
    return PatlakMap(ktrans, vp, r2, roi_out)


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """Peak SNR in dB over the whole series; peak is max |ref|."""
    x, ref = np.abs(np.asarray(x)), np.abs(np.asarray(ref))
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    peak = ref.max()
    if peak <= 0:
        raise ValueError("reference peak must be > 0")
    mse = np.mean((x - ref) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak ** 2 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_frame(x: np.ndarray, ref: np.ndarray, data_range: float) -> float:
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    size = min(11, min(x.shape))
    if size % 2 == 0:
        size -= 1
    win = _gaussian_window(size)
    mu_x = fftconvolve(x, win, mode="valid")
    mu_y = fftconvolve(ref, win, mode="valid")
    sxx = fftconvolve(x * x, win, mode="valid") - mu_x ** 2
    syy = fftconvolve(ref * ref, win, mode="valid") - mu_y ** 2
    sxy = fftconvolve(x * ref, win, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(x: np.ndarray, ref: np.ndarray, data_range: float | None = None) -> float:
    """Mean per-frame SSIM (11x11 Gaussian window, sigma 1.5, K1/K2 defaults).

    data_range defaults to max |ref|; pass a shared constant to make the
    measure symmetric in its arguments.
    """
    x, ref = np.abs(np.asarray(x)), np.abs(np.asarray(ref))
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    if x.ndim == 2:
        x, ref = x[None], ref[None]
    dr = float(ref.max()) if data_range is None else float(data_range)
    return float(np.mean([_ssim_frame(x[i], ref[i], dr) for i in range(x.shape[0])]))


def nrmse(x: np.ndarray, ref: np.ndarray) -> float:
    """||x - ref|| / ||ref|| over the whole series."""
    x, ref = np.asarray(x), np.asarray(ref)
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ValueError("zero reference")
    return float(np.linalg.norm(x - ref) / denom)


def evaluate_series(x: np.ndarray, ref: np.ndarray) -> MetricsReport:
    """Per-frame PSNR/SSIM/NRMSE with series-peak/series-norm conventions."""
    x, ref = np.abs(np.asarray(x)), np.abs(np.asarray(ref))
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    peak = ref.max()
    dr = float(peak)
    psnrs, ssims, nrmses = [], [], []
    for i in range(x.shape[0]):
        mse = np.mean((x[i] - ref[i]) ** 2)
        psnrs.append(float("inf") if mse == 0 else 10.0 * np.log10(peak ** 2 / mse))
        ssims.append(_ssim_frame(x[i], ref[i], dr))
        denom = np.linalg.norm(ref[i])
        nrmses.append(np.linalg.norm(x[i] - ref[i]) / denom if denom > 0 else np.nan)
    return MetricsReport(np.asarray(psnrs), np.asarray(ssims), np.asarray(nrmses))
