"""Phase retrieval from intensity-only measurements.

Core pieces: measurement models (far-field diffraction, coded diffraction
patterns, angularly-diverse low-resolution stacks), alternating-projection
and plug-and-play solvers, a gradient-flow baseline, metrics, and a
benchmark harness. See the ``lpr`` console script for the CLI.
"""

from .ap import (ApParams, RunReport, ap_solve, best_global_phase,
                 default_init, global_phase_align, intensity_change)
from .denoise import (BridgeError, ChannelPolicy, Enhancer, enhance,
                      enhance_complex, external_bridge, tv_objective)
from .field import (NoiseSpec, add_wgn, crop_center, estimate_noise_sigma,
                    fft2, ifft2, zero_pad)
from .io import (read_lprf, read_lprf_complex, read_png, write_lprf,
                 write_lprf_complex, write_png)
from .metrics import PSNR_CAP_DB, psnr, ssim
from .models import (CdiModel, CdpModel, FpmModel, MeasurementSet,
                     apply_adjoint, apply_forward, data_residual,
                     forward_intensity, magnitude_project, magnitude_residual,
                     spectral_coverage)
from .phantom import make_complex_phantom, make_phantom
from .solver import (LprParams, LprTrace, default_schedule, estimate_strength,
                     gap_vs_admm_residual, lpr_solve)
from .wf import WfParams, wf_baseline, wf_gradient

__version__ = "0.1.0"

__all__ = [
    "ApParams", "RunReport", "ap_solve", "best_global_phase", "default_init",
    "global_phase_align", "intensity_change",
    "BridgeError", "ChannelPolicy", "Enhancer", "enhance", "enhance_complex",
    "external_bridge", "tv_objective",
    "NoiseSpec", "add_wgn", "crop_center", "estimate_noise_sigma", "fft2",
    "ifft2", "zero_pad",
    "read_lprf", "read_lprf_complex", "read_png", "write_lprf",
    "write_lprf_complex", "write_png",
    "PSNR_CAP_DB", "psnr", "ssim",
    "CdiModel", "CdpModel", "FpmModel", "MeasurementSet", "apply_adjoint",
    "apply_forward", "data_residual", "forward_intensity",
    "magnitude_project", "magnitude_residual", "spectral_coverage",
    "make_complex_phantom", "make_phantom",
    "LprParams", "LprTrace", "default_schedule", "estimate_strength",
    "gap_vs_admm_residual", "lpr_solve",
    "WfParams", "wf_baseline", "wf_gradient",
    "__version__",
]
