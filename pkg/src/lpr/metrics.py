"""Image-quality metrics: PSNR and mean SSIM over sliding Gaussian windows."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

# Returned instead of +inf when the images are identical.
PSNR_CAP_DB = 999.0


def psnr(ref: np.ndarray, test: np.ndarray, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB.

    Parameters
    ----------
    ref, test : ndarray
        Real images of matching shape.
    peak : float, optional
        Dynamic range. Defaults to ``ref.max()`` (the ground-truth peak).

    Returns
    -------
    float
        10*log10(peak^2 / MSE), or PSNR_CAP_DB when MSE is exactly 0.
    """
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise ValueError("shape mismatch")
    mse = float(np.mean(np.square(ref - test)))
    if mse == 0.0:
        return PSNR_CAP_DB
    if peak is None:
        peak = float(ref.max())
    if peak <= 0:
        raise ValueError("peak must be positive")
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=float) - size // 2
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(ref: np.ndarray, test: np.ndarray, peak: float | None = None) -> float:
    """Mean structural similarity with the canonical 11x11 / sigma 1.5 window.

    K1 = 0.01, K2 = 0.03. ``peak`` sets the dynamic range; the default is
    the joint value range of both images, which keeps ssim(a, b) symmetric.
    Callers scoring against known ground truth should pass its peak
    explicitly so a wild estimate cannot inflate the stabilizing constants.
    """
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise ValueError("shape mismatch")
    win = _gaussian_window()
    if ref.shape[0] < win.shape[0] or ref.shape[1] < win.shape[1]:
        raise ValueError("image smaller than the 11x11 SSIM window")
    if peak is None:
        hi = max(ref.max(), test.max())
        lo = min(ref.min(), test.min(), 0.0)
        peak = float(hi - lo)
    if peak <= 0:
        raise ValueError("peak must be positive")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu1 = convolve2d(ref, win, mode="valid")
    mu2 = convolve2d(test, win, mode="valid")
    s11 = convolve2d(ref * ref, win, mode="valid") - mu1 * mu1
    s22 = convolve2d(test * test, win, mode="valid") - mu2 * mu2
    s12 = convolve2d(ref * test, win, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))
