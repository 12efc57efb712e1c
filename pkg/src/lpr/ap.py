"""Alternating-projection phase retrieval.

The classical baseline: iterate the modality's magnitude projection (plus
the object-domain constraint it embeds) until the per-pixel intensity
change between successive iterates drops below a threshold. Also provides
the deterministic adjoint initializer and global-phase alignment helpers
shared by every solver in the package.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import ifft2, zero_pad
from .models import (CdiModel, CdpModel, FpmModel, MeasurementSet,
                     _cdi_project_padded, as_measurements, data_residual,
                     magnitude_project, upsample_bilinear)

# iteration budgets that work at desk scale, overridable per run
DEFAULT_MAX_ITERS = {"cdi": 1000, "cdp": 300, "fpm": 50}


@dataclass
class ApParams:
    max_iters: int | None = None   # None: modality default
    tol: float = 1e-6              # relative intensity-change threshold
    inner_variant: str = "error-reduction"  # or "hio" (CDI only)
    hio_beta: float = 0.9
    record_history: bool = False

    def __post_init__(self):
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.inner_variant not in ("error-reduction", "hio"):
            raise ValueError("inner_variant must be 'error-reduction' or 'hio'")
        if not 0 < self.hio_beta <= 1:
            raise ValueError("hio_beta must be in (0, 1]")


@dataclass
class RunReport:
    """Per-run diagnostics: residual trace, stopping state, wall time."""

    residuals: list = dc_field(default_factory=list)
    intensity_changes: list = dc_field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_seconds: float = 0.0
    notes: dict = dc_field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual", "intensity_change"])
            for k in range(len(self.residuals)):
                chg = self.intensity_changes[k] if k < len(self.intensity_changes) else ""
                w.writerow([k, f"{self.residuals[k]:.9e}", chg])

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_seconds": self.wall_seconds,
            "final_residual": self.residuals[-1] if self.residuals else None,
            **self.notes,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def intensity_change(u_new: np.ndarray, u_old: np.ndarray) -> float:
    """Mean absolute per-pixel intensity change, normalized by mean intensity."""
    i_old = np.abs(u_old) ** 2
    denom = float(np.mean(i_old))
    if denom == 0:
        denom = 1.0
    return float(np.mean(np.abs(np.abs(u_new) ** 2 - i_old)) / denom)


def default_init(I: MeasurementSet, m) -> np.ndarray:
    """Deterministic adjoint-style initializer for each modality.

    CDI back-projects the measured magnitudes with zero phase and crops to
    the support. CDP averages the per-mask back-projections. FPM upsamples
    the square root of the center-LED image with zero phase.
    """
    I = as_measurements(I, m)
    mag = np.sqrt(np.maximum(I.planes, 0.0))
    if isinstance(m, CdiModel):
        from .field import crop_center
        est = crop_center(ifft2(mag[0].astype(complex)), m.object_h, m.object_w)
        from .models import _cdi_apply_constraints
        return _cdi_apply_constraints(est, m)
    if isinstance(m, CdpModel):
        est = (np.conj(m.masks) * ifft2(mag.astype(complex))).mean(axis=0)
        return est
    if isinstance(m, FpmModel):
        # low-res amplitudes carry an extra factor of the downsample ratio
        # under the unitary convention
        amp = upsample_bilinear(mag[0], m.downsample) / m.downsample
        return amp.astype(complex)
    raise TypeError(f"unknown model {type(m).__name__}")


def _solve_hio(I, m: CdiModel, params, init, t0):
    # hybrid input-output runs on the padded plane so the feedback region
    # (outside the support) exists even for a full-rectangle support
    from .field import crop_center
    mag = np.sqrt(np.maximum(I.planes[0], 0.0))
    support_pad = zero_pad(m.support_mask.astype(float), m.oversample) > 0.5
    g = zero_pad(init.astype(complex), m.oversample)
    report = RunReport()
    obj_prev = crop_center(g, m.object_h, m.object_w)
    max_iters = params.max_iters or DEFAULT_MAX_ITERS["cdi"]
    for k in range(max_iters):
        p = _cdi_project_padded(g, mag)
        keep = support_pad
        if m.real_nonneg:
            keep = support_pad & (p.real >= 0)
            p = np.where(keep, p.real, p)
        g = np.where(keep, p, g - params.hio_beta * p)
        obj = crop_center(g, m.object_h, m.object_w)
        chg = intensity_change(obj, obj_prev)
        report.intensity_changes.append(chg)
        if params.record_history:
            report.residuals.append(data_residual(obj, m, I))
        obj_prev = obj
        if chg < params.tol:
            report.converged = True
            break
    report.iterations = len(report.intensity_changes)
    if not params.record_history:
        report.residuals.append(data_residual(obj_prev, m, I))
    report.wall_seconds = time.perf_counter() - t0
    return obj_prev, report


def ap_solve(I: MeasurementSet, m, params: ApParams | None = None,
             init: np.ndarray | None = None):
    """Run alternating projections until the intensity change stalls.

    Parameters
    ----------
    I : MeasurementSet
    m : CdiModel | CdpModel | FpmModel
    params : ApParams, optional
    init : ndarray, optional
        Starting field; defaults to :func:`default_init`.

    Returns
    -------
    (ndarray, RunReport)
        Final object-plane iterate and the run diagnostics.
    """
    params = params or ApParams()
    t0 = time.perf_counter()
    I = as_measurements(I, m)
    if init is None:
        init = default_init(I, m)
    if params.inner_variant == "hio":
        if not isinstance(m, CdiModel):
            raise ValueError("hio needs a support constraint; CDI only")
        return _solve_hio(I, m, params, init, t0)
    modality = I.modality
    max_iters = params.max_iters or DEFAULT_MAX_ITERS[modality]
    u = init.astype(complex)
    report = RunReport()
    for k in range(max_iters):
        u_next = magnitude_project(u, m, I)
        chg = intensity_change(u_next, u)
        report.intensity_changes.append(chg)
        if params.record_history:
            report.residuals.append(data_residual(u_next, m, I))
        u = u_next
        if chg < params.tol:
            report.converged = True
            break
    report.iterations = len(report.intensity_changes)
    if not params.record_history:
        report.residuals.append(data_residual(u, m, I))
    report.wall_seconds = time.perf_counter() - t0
    return u, report


def best_global_phase(est: np.ndarray, ref: np.ndarray) -> float | None:
    """Phase phi minimizing ||est * e^{-i phi} - ref||, or None if degenerate."""
    if est.shape != ref.shape:
        raise ValueError("shape mismatch")
    corr = np.vdot(ref, est)  # sum(est * conj(ref))
    if corr == 0:
        return None
    return float(np.angle(corr))


def global_phase_align(est: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rotate ``est`` by the optimal global phase against ``ref``.

    Returns ``est`` unchanged when the correlation is exactly zero (no
    preferred phase exists).
    """
    phi = best_global_phase(est, ref)
    if phi is None:
        return est
    return est * np.exp(-1j * phi)
