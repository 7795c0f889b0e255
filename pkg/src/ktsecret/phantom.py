"""Synthetic contrast-enhanced dynamic phantoms with known tracer kinetics.

A phantom is a stack of elliptical regions on a flat background: one
"ventricle" carrying the arterial input function (AIF) directly, plus tissue
regions whose time-curves follow the Patlak model exactly. Intensities are an
affine map of concentration, jointly normalized to [0, 1] over the whole
series so inter-frame contrast is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .encoding import KtData, SamplingMask, encode
from .numerics import as_complex_tensor, check_pow2, dft2

__all__ = [
    "PhantomSpec",
    "PhantomTruth",
    "gamma_variate_aif",
    "synthesize",
    "preprocess",
    "corrupt",
    "normalize01",
    "split_indices",
]

BASELINE = 0.1
CONTRAST_PER_MM = 0.1  # intensity per mM of contrast agent, pre-normalization


@dataclass(frozen=True)
class PhantomSpec:
    h: int = 64
    w: int = 64
    t: int = 16
    dt: float = 2.0  # seconds per frame
    n_tissue_regions: int = 3
    ktrans_range: tuple = (0.1, 0.6)  # 1/min
    vp_range: tuple = (0.02, 0.15)  # plasma volume fraction
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.t < 8:
            raise ValueError("need at least 8 frames")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for lo, hi in (self.ktrans_range, self.vp_range):
            if lo < 0 or hi < lo:
                raise ValueError("parameter ranges must be non-negative with max >= min")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class PhantomTruth:
    """Ground truth for one phantom.

    aif is the plasma concentration curve in mM; aif_signal is the same curve
    in normalized image-intensity units, which is what a kinetic fit against
    the (normalized) images must use to recover absolute parameters.
    """

    ref_images: np.ndarray  # complex [T,H,W], noiseless, intensities in [0,1]
    ktrans_map: np.ndarray  # real [H,W], 1/min
    vp_map: np.ndarray  # real [H,W]
    aif: np.ndarray  # real [T], mM
    aif_signal: np.ndarray  # real [T], normalized intensity units
    region_labels: np.ndarray  # int [H,W]: 0 background, 1 ventricle, >=2 tissue
    dt: float  # seconds per frame

    @property
    def tissue_roi(self) -> np.ndarray:
        return self.region_labels >= 2


def gamma_variate_aif(t_axis: np.ndarray, t0: float, alpha: float, beta: float, scale: float) -> np.ndarray:
    """Gamma-variate bolus curve, peak value `scale` at t = t0 + alpha*beta."""
    t_axis = np.asarray(t_axis, dtype=float)
    if np.any(np.diff(t_axis) <= 0):
        raise ValueError("t_axis must be strictly increasing")
    if alpha <= 0 or beta <= 0 or scale <= 0:
        raise ValueError("alpha, beta, scale must be positive")
    tau = t_axis - t0
    out = np.zeros_like(t_axis)
    up = tau > 0
    out[up] = scale * (tau[up] / (alpha * beta)) ** alpha * np.exp(alpha - tau[up] / beta)
    return out


def _ellipse(h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    if cy - ry < 0 or cy + ry > h - 1 or cx - rx < 0 or cx + rx > w - 1:
        raise ValueError("region overflows image bounds")
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def normalize01(series: np.ndarray) -> np.ndarray:
    """Affine min-max normalization of magnitudes over the whole T,H,W block.

    Phase is preserved; for real non-negative input this is the plain
    (x - min)/(max - min) map.
    """
    series = as_complex_tensor(series)
    mag = np.abs(series)
    lo, hi = mag.min(), mag.max()
    if hi <= lo:
        raise ValueError("constant series cannot be normalized")
    scaled = (mag - lo) / (hi - lo)
    phase = np.exp(1j * np.angle(series))
    return scaled * phase


def synthesize(spec: PhantomSpec) -> PhantomTruth:
    """Generate a phantom whose tissue curves are exactly Patlak-linear."""
    rng = np.random.default_rng(spec.seed)
    h, w, t = spec.h, spec.w, spec.t
    t_axis = np.arange(t) * spec.dt
    duration = t_axis[-1]
    aif = gamma_variate_aif(t_axis, t0=0.1 * duration, alpha=2.5, beta=duration / 14.0, scale=5.0)
    # Patlak integral in minutes so ktrans carries 1/min units
    int_aif = cumulative_trapezoid(aif, t_axis / 60.0, initial=0.0)

    labels = np.zeros((h, w), dtype=np.int64)
    ktrans_map = np.zeros((h, w))
    vp_map = np.zeros((h, w))
    conc = np.zeros((t, h, w))

    # ventricle: carries the AIF directly
    vent = _ellipse(h, w, 0.5 * (h - 1), 0.3 * (w - 1), 0.14 * h, 0.1 * w)
    labels[vent] = 1
    conc[:, vent] = aif[:, None]

    # tissue regions on an arc around the image center, right of the ventricle
    ring_r = 0.28 * min(h, w)
    cy0, cx0 = 0.5 * (h - 1), 0.55 * (w - 1)
    for i in range(spec.n_tissue_regions):
        phi = -np.pi / 2 + i * np.pi / max(1, spec.n_tissue_regions - 1) if spec.n_tissue_regions > 1 else 0.0
        cy = cy0 + ring_r * np.sin(phi)
        cx = cx0 + 0.5 * ring_r * np.cos(phi) + 0.12 * w
        region = _ellipse(h, w, cy, cx, 0.09 * h, 0.09 * w)
        region &= labels == 0
        ktrans = rng.uniform(*spec.ktrans_range)
        vp = rng.uniform(*spec.vp_range)
        labels[region] = 2 + i
        ktrans_map[region] = ktrans
        vp_map[region] = vp
        conc[:, region] = (ktrans * int_aif + vp * aif)[:, None]

    intensity = BASELINE + CONTRAST_PER_MM * conc
    lo, hi = intensity.min(), intensity.max()
    images = (intensity - lo) / (hi - lo)
    scale = CONTRAST_PER_MM / (hi - lo)
    return PhantomTruth(
        ref_images=images.astype(np.complex128),
        ktrans_map=ktrans_map,
        vp_map=vp_map,
        aif=aif,
        aif_signal=aif * scale,
        region_labels=labels,
        dt=spec.dt,
    )


def preprocess(series: np.ndarray, target_t: int, target_hw: int) -> np.ndarray:
    """Resample a series to a fixed frame count and padded image size.

    Time: linear interpolation up to target_t frames (downsampling rejected).
    Space: centered zero-padding of the k-space to target_hw x target_hw,
    which preserves image energy exactly under the unitary DFT. Finally the
    series is intensity-normalized to [0, 1].
    """
    series = as_complex_tensor(series)
    t, h, w = series.shape
    check_pow2(target_hw)
    if target_t < t:
        raise ValueError("temporal downsampling not supported; target_t must be >= current frames")
    if target_hw < h or target_hw < w:
        raise ValueError("target size must be >= current size (padding only)")

    if target_t > t:
        pos = np.arange(target_t) * (t / target_t)
        pos = np.clip(pos, 0, t - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, t - 1)
        frac = (pos - lo)[:, None, None]
        series = (1 - frac) * series[lo] + frac * series[hi]

    if target_hw > h or target_hw > w:
        k = np.fft.fftshift(dft2(series, "forward"), axes=(-2, -1))
        py, px = (target_hw - h) // 2, (target_hw - w) // 2
        k = np.pad(k, ((0, 0), (py, target_hw - h - py), (px, target_hw - w - px)))
        series = dft2(np.fft.ifftshift(k, axes=(-2, -1)), "inverse")

    return normalize01(series)


def corrupt(truth: PhantomTruth, mask: SamplingMask, noise_sigma: float, seed: int) -> KtData:
    """Undersample the reference k-space, adding noise on sampled points only.

    Noise std is noise_sigma times the peak magnitude of the DC row of the
    reference k-space; complex Gaussian, split evenly between components.
    """
    kspace = dft2(truth.ref_images, "forward")
    if kspace.shape != mask.shape:
        raise ValueError(f"phantom shape {kspace.shape} != mask shape {mask.shape}")
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        std = noise_sigma * np.abs(kspace[:, 0, :]).max()
        noise = (rng.standard_normal(kspace.shape) + 1j * rng.standard_normal(kspace.shape)) * (std / np.sqrt(2))
        kspace = kspace + noise
    return KtData(samples=kspace * mask.bits, mask=mask)


def split_indices(n: int, seed: int) -> tuple:
    """Shuffled train/validation/test split at 60/16/24 percent."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.60 * n))
    n_val = int(round(0.16 * n))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]
