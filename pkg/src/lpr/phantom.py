"""Procedural ground-truth images for benchmarks and tests."""

from __future__ import annotations

import numpy as np


def make_phantom(shape, seed: int = 7) -> np.ndarray:
    """Piecewise-smooth test image in [0, 1]: gradient background, soft
    ellipses and a few rectangles. Deterministic per seed."""
    if np.isscalar(shape):
        shape = (int(shape), int(shape))
    h, w = shape
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy / h
    xx = xx / w
    img = 0.15 + 0.2 * xx + 0.1 * yy
    for _ in range(6):
        cy, cx = rng.uniform(0.15, 0.85, 2)
        ry, rx = rng.uniform(0.05, 0.22, 2)
        img = img + rng.uniform(0.2, 0.7) * (
            (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) < 1.0)
    for _ in range(4):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        hy, hx = rng.uniform(0.03, 0.12, 2)
        img = img + rng.uniform(-0.4, 0.5) * (
            (np.abs(yy - cy) < hy) & (np.abs(xx - cx) < hx))
    img -= img.min()
    img /= img.max()
    return img


def make_complex_phantom(shape, seed: int = 7, amp_floor: float = 0.2,
                         phase_span: float = np.pi / 2) -> np.ndarray:
    """Complex cell-like object: structured amplitude and a different
    structured phase plane, so both channels carry information."""
    amp = make_phantom(shape, seed) * (1.0 - amp_floor) + amp_floor
    ph = (make_phantom(shape, seed + 14) - 0.5) * phase_span
    return amp * np.exp(1j * ph)
