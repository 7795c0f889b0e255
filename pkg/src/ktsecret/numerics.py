"""Complex array core: unitary 2D DFT and periodic finite-difference operators.

All functions operate on complex128 numpy arrays and are pure; the DFT is
unitary in both directions so the adjoint of the forward transform is exactly
the inverse transform.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_complex_tensor",
    "check_pow2",
    "dft2",
    "grad_spatial",
    "grad_spatial_adjoint",
    "grad_temporal",
    "grad_temporal_adjoint",
]


def as_complex_tensor(data) -> np.ndarray:
    """Coerce to a complex128 array, rejecting NaN/Inf."""
    arr = np.asarray(data, dtype=np.complex128)
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise ValueError("non-finite values are not admitted")
    return arr


def check_pow2(*dims: int) -> None:
    for n in dims:
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"dimension {n} is not a power of two")


def dft2(x: np.ndarray, direction: str = "forward") -> np.ndarray:
    """Unitary 2D DFT over the last two axes.

    Both directions scale by 1/sqrt(h*w), so forward and inverse are
    adjoint/inverse of each other exactly. Dimensions must be powers of two.
    """
    h, w = x.shape[-2], x.shape[-1]
    check_pow2(h, w)
    x = np.asarray(x, dtype=np.complex128)
    if direction == "forward":
        return np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    if direction == "inverse":
        return np.fft.ifft2(x, axes=(-2, -1), norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")


def _fwd_diff(x: np.ndarray, axis: int) -> np.ndarray:
    # forward difference with periodic wrap: (x[i+1] - x[i])
    return np.roll(x, -1, axis=axis) - x


def _fwd_diff_adjoint(y: np.ndarray, axis: int) -> np.ndarray:
    # adjoint of the periodic forward difference is the negative
    # backward difference: (y[i-1] - y[i])
    return np.roll(y, 1, axis=axis) - y


def _check_3d(s: np.ndarray, min_t: int = 1) -> np.ndarray:
    s = np.asarray(s, dtype=np.complex128)
    if s.ndim != 3:
        raise ValueError(f"expected a T,H,W volume, got shape {s.shape}")
    if s.shape[0] < min_t or s.shape[1] < 2 or s.shape[2] < 2:
        raise ValueError(f"volume too small for differencing: {s.shape}")
    return s


def grad_spatial(s: np.ndarray) -> np.ndarray:
    """Forward differences along H and W (periodic), stacked as [2,T,H,W]."""
    s = _check_3d(s)
    return np.stack([_fwd_diff(s, axis=1), _fwd_diff(s, axis=2)])


def grad_spatial_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of grad_spatial; input shape [2,T,H,W]."""
    g = np.asarray(g, dtype=np.complex128)
    if g.ndim != 4 or g.shape[0] != 2:
        raise ValueError(f"expected a 2,T,H,W stack, got shape {g.shape}")
    return _fwd_diff_adjoint(g[0], axis=1) + _fwd_diff_adjoint(g[1], axis=2)


def grad_temporal(s: np.ndarray) -> np.ndarray:
    """Forward difference along the frame axis (periodic)."""
    s = _check_3d(s, min_t=2)
    return _fwd_diff(s, axis=0)


def grad_temporal_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of grad_temporal."""
    g = _check_3d(g, min_t=2)
    return _fwd_diff_adjoint(g, axis=0)
