"""Pluggable image enhancers: the prior step of the plug-and-play solver.

Built-in kinds are identity, Gaussian blur, median filter and total
variation (Chambolle dual projection). The "external" kind shells out to
any command speaking the LPRF file protocol, which is how learned
denoisers plug in without this package shipping network weights.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .io import read_lprf, write_lprf

KINDS = ("identity", "gaussian", "median", "tv", "external")


@dataclass
class Enhancer:
    """A denoiser with a noise-level parameter in image-value units."""

    kind: str = "tv"
    strength: float = 0.0
    tv_iters: int = 30     # dual projected-gradient iterations
    tv_step: float = 0.248
    median_size: int = 3
    command: str | None = None   # external kind: invoked as `<cmd> <dir>`
    workdir: str | None = None
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.strength < 0:
            raise ValueError("strength must be >= 0")
        if self.kind == "external" and not self.command:
            raise ValueError("external enhancer needs a command")

    def with_strength(self, strength: float) -> "Enhancer":
        out = Enhancer(**{**self.__dict__})
        out.strength = strength
        return out


@dataclass(frozen=True)
class ChannelPolicy:
    """How a real-valued denoiser is applied to a complex field."""

    mode: str = "amp_phase"  # or "real_imag" | "amplitude_only"

    def __post_init__(self):
        if self.mode not in ("amp_phase", "real_imag", "amplitude_only"):
            raise ValueError("unknown channel policy")


class BridgeError(RuntimeError):
    """External enhancer misbehaved: bad exit, timeout, or bad response."""


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad
    d = np.zeros_like(px)
    d[0, :] = px[0, :]
    d[1:-1, :] = px[1:-1, :] - px[:-2, :]
    d[-1, :] = -px[-2, :]
    d[:, 0] += py[:, 0]
    d[:, 1:-1] += py[:, 1:-1] - py[:, :-2]
    d[:, -1] += -py[:, -2]
    return d


def tv_objective(z: np.ndarray, v: np.ndarray, weight: float) -> float:
    """0.5||z - v||^2 + weight * TV(z) with isotropic TV."""
    gx, gy = _grad(z)
    return float(0.5 * np.sum((z - v) ** 2) + weight * np.sum(np.hypot(gx, gy)))


def _tv_chambolle(v, weight, n_iter, tau):
    # dual projected gradient on the TV denoising problem
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    for _ in range(n_iter):
        gx, gy = _grad(_div(px, py) - v / weight)
        nrm = np.hypot(gx, gy)
        px = (px + tau * gx) / (1.0 + tau * nrm)
        py = (py + tau * gy) / (1.0 + tau * nrm)
    return v - weight * _div(px, py)


def external_bridge(img: np.ndarray, command, strength: float,
                    workdir=None, timeout_s: float = 30.0) -> np.ndarray:
    """Round-trip one plane through an out-of-process denoiser.

    Writes `<dir>/in.lprf` and `<dir>/meta.json` (field "sigma"), runs
    `<cmd> <dir>`, and reads `<dir>/out.lprf` back. Exit code 0 and
    matching dims are required; anything else raises BridgeError.
    """
    if workdir is None:
        workdir = tempfile.mkdtemp(prefix="lpr-bridge-")
    d = Path(workdir)
    d.mkdir(parents=True, exist_ok=True)
    write_lprf(d / "in.lprf", np.asarray(img, dtype=float))
    (d / "meta.json").write_text(json.dumps({"sigma": float(strength)}))
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.run(argv + [str(d)], capture_output=True,
                              timeout=timeout_s)
    except subprocess.TimeoutExpired as e:
        raise BridgeError(f"enhancer timed out after {timeout_s}s") from e
    if proc.returncode != 0:
        raise BridgeError(
            f"enhancer exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:500]}")
    out_path = d / "out.lprf"
    if not out_path.exists():
        raise BridgeError("enhancer produced no out.lprf")
    out = read_lprf(out_path)[0]
    if out.shape != img.shape:
        raise BridgeError(f"enhancer changed dims {img.shape} -> {out.shape}")
    return out


def enhance(img: np.ndarray, e: Enhancer) -> np.ndarray:
    """Denoise one real plane. Identity kind is bit-exact passthrough."""
    if e.kind == "identity":
        return img
    if not np.all(np.isfinite(img)):
        raise ValueError("enhance requires finite input")
    if e.kind == "external":
        return external_bridge(img, e.command, e.strength, e.workdir, e.timeout_s)
    if e.strength == 0:
        return img.copy()
    if e.kind == "gaussian":
        # wrap mode keeps the filter translation-equivariant and mean-preserving
        return ndimage.gaussian_filter(img, sigma=e.strength, mode="wrap")
    if e.kind == "median":
        return ndimage.median_filter(img, size=e.median_size, mode="wrap")
    if e.kind == "tv":
        return _tv_chambolle(img.astype(float), e.strength, e.tv_iters, e.tv_step)
    raise ValueError(f"unknown kind {e.kind}")


def enhance_complex(v: np.ndarray, e: Enhancer,
                    policy: ChannelPolicy = ChannelPolicy()) -> np.ndarray:
    """Apply a real-plane enhancer to a complex field via a channel split.

    amp_phase denoises |v| and the wrapped angle independently (no
    unwrapping; wrap artifacts are the price of a well-posed channel).
    real_imag denoises Re and Im. amplitude_only keeps the phase exactly.
    """
    if e.kind == "identity":
        return v
    if policy.mode == "real_imag":
        return enhance(v.real, e) + 1j * enhance(v.imag, e)
    amp = enhance(np.abs(v), e)
    if policy.mode == "amplitude_only":
        ph = np.exp(1j * np.angle(v))
    else:
        ph = np.exp(1j * enhance(np.angle(v), e))
    return amp * ph
