"""Core field utilities: unitary FFTs, padding, and calibrated noise.

All images are plain 2-D numpy arrays (complex128 for fields, float64 for
intensities). The FFT convention throughout the package is unitary, so
Parseval holds exactly and projection operators are scale-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft


def fft2(f):
    """Unitary 2-D FFT (norm="ortho")."""
    return _fft.fft2(f, norm="ortho")


def ifft2(f):
    """Unitary 2-D inverse FFT (norm="ortho")."""
    return _fft.ifft2(f, norm="ortho")


def zero_pad(f: np.ndarray, factor_h: float, factor_w: float | None = None) -> np.ndarray:
    """Embed ``f`` centered in a zero plane enlarged by the given factors.

    Output dims are ceil(factor * input dims); the input block starts at
    floor((padded - original) / 2) on each axis so ``crop_center`` is the
    exact inverse.

    Parameters
    ----------
    f : ndarray
        2-D field or image.
    factor_h, factor_w : float
        Per-axis enlargement ratios, both >= 1. ``factor_w`` defaults to
        ``factor_h``.
    """
    if factor_w is None:
        factor_w = factor_h
    if factor_h < 1 or factor_w < 1:
        raise ValueError("padding factors must be >= 1")
    h, w = f.shape
    H = int(np.ceil(factor_h * h))
    W = int(np.ceil(factor_w * w))
    out = np.zeros((H, W), dtype=f.dtype)
    oy = (H - h) // 2
    ox = (W - w) // 2
    out[oy:oy + h, ox:ox + w] = f
    return out


def crop_center(f: np.ndarray, height: int, width: int) -> np.ndarray:
    """Extract the centered height x width block (inverse of zero_pad)."""
    H, W = f.shape
    if height > H or width > W:
        raise ValueError("crop larger than input")
    oy = (H - height) // 2
    ox = (W - width) // 2
    return f[oy:oy + height, ox:ox + width]


@dataclass(frozen=True)
class NoiseSpec:
    """White Gaussian noise level as an SNR in dB plus a reproducibility seed."""

    snr_db: float
    seed: int = 0


def add_wgn(img: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Add white Gaussian noise at a calibrated SNR.

    The noise variance is sigma^2 = mean(img^2) / 10^(snr_db/10), i.e. SNR
    is the power ratio against the mean squared signal. The output is NOT
    clamped; negative intensities are the caller's problem (solvers clamp
    at sqrt time so the noise statistics stay exact).

    Returns
    -------
    ndarray
        img + noise, same shape. Deterministic for a fixed seed.
    """
    if not np.isfinite(spec.snr_db):
        raise ValueError("snr_db must be finite")
    if not np.all(np.isfinite(img)):
        raise ValueError("input image must be finite")
    rng = np.random.default_rng(spec.seed)
    sigma = float(np.sqrt(np.mean(np.square(img)) / 10.0 ** (spec.snr_db / 10.0)))
    return img + sigma * rng.standard_normal(img.shape)


def estimate_noise_sigma(planes: np.ndarray) -> float:
    """Estimate the WGN standard deviation of noisy intensity planes.

    Noiseless intensities are nonnegative, so negative samples are pure
    noise excursions around near-zero bins; their RMS estimates sigma.
    Returns 0.0 when there are too few negatives to trust (clean data).
    """
    planes = np.asarray(planes)
    neg = planes[planes < 0]
    if neg.size < max(16, planes.size // 10000):
        return 0.0
    return float(np.sqrt(np.mean(np.square(neg))))
