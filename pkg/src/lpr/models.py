"""Measurement-formation models and their magnitude projections.

Three modalities are implemented. CDI: far-field intensity of the padded
object spectrum. CDP: a stack of random phase modulations ahead of the
Fourier plane. FPM: an LED grid illuminates the object at an angle, so each
exposure sees a pupil-windowed, shifted sub-region of the object spectrum
at reduced resolution.

Every model provides a forward intensity simulation and the projection
that re-imposes measured magnitudes on a field iterate, which is the
workhorse of both the alternating-projection baseline and the
plug-and-play solver's data step.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft as _sfft
from scipy.ndimage import zoom as _zoom

from .field import fft2, ifft2, zero_pad, crop_center


# ---------------------------------------------------------------------------
# model types


@dataclass
class CdiModel:
    """Oversampled far-field diffraction: I = |F(pad(u))|^2.

    Parameters
    ----------
    object_h, object_w : int
        Object-plane dims.
    oversample : float
        Per-axis padding ratio, >= 2 so the total oversampling is >= 4x.
    support_mask : ndarray of bool, optional
        Object-plane support; defaults to the full padding rectangle.
    real_nonneg : bool
        Optionally constrain iterates to real nonnegative values inside
        the support. Off by default; complex objects are the general case.
    """

    object_h: int
    object_w: int
    oversample: float = 2.0
    support_mask: np.ndarray | None = None
    real_nonneg: bool = False

    def __post_init__(self):
        if self.oversample < 2:
            raise ValueError("oversample must be >= 2 per axis")
        if self.support_mask is None:
            self.support_mask = np.ones((self.object_h, self.object_w), dtype=bool)
        if self.support_mask.shape != (self.object_h, self.object_w):
            raise ValueError("support_mask dims must equal object dims")

    @property
    def padded_shape(self):
        return (int(np.ceil(self.oversample * self.object_h)),
                int(np.ceil(self.oversample * self.object_w)))


@dataclass
class CdpModel:
    """Coded diffraction: I_l = |F(u * d_l)|^2 with unit-modulus masks d_l."""

    masks: np.ndarray  # (L, h, w) complex, |d| = 1 everywhere
    mask_seed: int = 0
    combine: str = "sequential"  # multi-mask projection rule, or "average"

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=complex)
        if self.masks.ndim != 3 or self.masks.shape[0] < 1:
            raise ValueError("masks must be a nonempty (L, h, w) stack")
        if not np.allclose(np.abs(self.masks), 1.0, atol=1e-9):
            raise ValueError("masks must be unit modulus")
        if self.combine not in ("sequential", "average"):
            raise ValueError("combine must be 'sequential' or 'average'")

    @classmethod
    def gaussian_phase(cls, shape, n_masks: int, seed: int = 0,
                       combine: str = "sequential") -> "CdpModel":
        """Phase-only masks d = exp(2*pi*i*g) with g ~ N(0, 1), seeded."""
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n_masks,) + tuple(shape))
        return cls(masks=np.exp(2j * np.pi * g), mask_seed=seed, combine=combine)

    @property
    def n_masks(self):
        return self.masks.shape[0]

    @property
    def object_shape(self):
        return self.masks.shape[1:]


def _spiral_grid(grid: int):
    # LED visit order: center outward, ties broken by angle
    half = grid // 2
    coords = [(gy, gx) for gy in range(-half, grid - half)
              for gx in range(-half, grid - half)]
    coords.sort(key=lambda c: (c[0] * c[0] + c[1] * c[1], np.arctan2(c[0], c[1])))
    return coords


@dataclass
class FpmModel:
    """LED-array microscope: I_j = |F^-1[P . shift_j(F u)]|^2 on a coarse grid.

    Angled illumination shifts the object spectrum, the objective pupil P
    windows it, and the camera records the low-resolution intensity. Use
    :meth:`from_geometry` to derive offsets and the pupil from the
    physical layout.
    """

    hr_shape: tuple
    lr_shape: tuple
    grid: int
    pupil: np.ndarray          # complex plane on the LR grid, natural (fftfreq) order
    offsets_px: list           # per-LED (dy, dx) spectral-pixel offsets, spiral order
    wavevectors: list          # per-LED (ky, kx) in cycles/m, spiral order
    wavelength: float = 625e-9
    na: float = 0.08
    led_pitch: float = 4e-3
    led_height: float = 84.8e-3
    pixel_size: float = 3.4e-6

    def __post_init__(self):
        hh, hw = self.hr_shape
        lh, lw = self.lr_shape
        if hh % lh or hw % lw or hh // lh != hw // lw:
            raise ValueError("hr dims must be an integer multiple of lr dims")
        if self.pupil.shape != tuple(self.lr_shape):
            raise ValueError("pupil must live on the LR grid")
        if len(self.offsets_px) != self.grid * self.grid:
            raise ValueError("need one offset per LED")
        ny = hh // 2
        nx = hw // 2
        for dy, dx in self.offsets_px:
            if abs(dy) > ny or abs(dx) > nx:
                raise ValueError(
                    f"LED offset ({dy},{dx}) px pushes the pupil window "
                    "outside the recoverable spectrum")

    @property
    def downsample(self):
        return self.hr_shape[0] // self.lr_shape[0]

    @property
    def n_leds(self):
        return self.grid * self.grid

    @classmethod
    def from_geometry(cls, hr_shape, lr_shape, grid: int, wavelength: float = 625e-9,
                      na: float = 0.08, led_pitch: float = 4e-3,
                      led_height: float = 84.8e-3, pixel_size: float = 3.4e-6) -> "FpmModel":
        """Derive spectral offsets and the pupil disk from the bench layout.

        The camera field of view is lr * pixel_size, which fixes the
        spectral pixel pitch 1/FOV shared by both grids. Each LED at
        lateral position p contributes a plane wave with spatial frequency
        sin(atan(p / height)) / wavelength.
        """
        lh, lw = lr_shape
        fov_y = lh * pixel_size
        fov_x = lw * pixel_size
        pitch_y = 1.0 / fov_y
        pitch_x = 1.0 / fov_x
        pupil_radius_px = (na / wavelength) / pitch_y
        fy = _sfft.fftfreq(lh) * lh
        fx = _sfft.fftfreq(lw) * lw
        FY, FX = np.meshgrid(fy, fx, indexing="ij")
        pupil = ((FY * FY + FX * FX) <= pupil_radius_px ** 2).astype(complex)
        offsets, waves = [], []
        for gy, gx in _spiral_grid(grid):
            ky = np.sin(np.arctan2(gy * led_pitch, led_height)) / wavelength
            kx = np.sin(np.arctan2(gx * led_pitch, led_height)) / wavelength
            offsets.append((int(round(ky / pitch_y)), int(round(kx / pitch_x))))
            waves.append((ky, kx))
        return cls(hr_shape=tuple(hr_shape), lr_shape=tuple(lr_shape), grid=grid,
                   pupil=pupil, offsets_px=offsets, wavevectors=waves,
                   wavelength=wavelength, na=na, led_pitch=led_pitch,
                   led_height=led_height, pixel_size=pixel_size)

    @property
    def pupil_radius_px(self) -> float:
        return (self.na / self.wavelength) * self.lr_shape[0] * self.pixel_size


@dataclass
class MeasurementSet:
    """Stack of nonnegative intensity planes plus the model that made them."""

    planes: np.ndarray  # (n, h, w) float
    modality: str       # "cdi" | "cdp" | "fpm"
    model: object

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim == 2:
            self.planes = self.planes[None]
        n = self.planes.shape[0]
        if self.modality == "cdi" and n != 1:
            raise ValueError("cdi carries exactly one plane")
        if self.modality == "cdp" and n != self.model.n_masks:
            raise ValueError("cdp needs one plane per mask")
        if self.modality == "fpm" and n != self.model.n_leds:
            raise ValueError("fpm needs one plane per LED")


# ---------------------------------------------------------------------------
# forward simulation


def modality_of(m) -> str:
    if isinstance(m, CdiModel):
        return "cdi"
    if isinstance(m, CdpModel):
        return "cdp"
    if isinstance(m, FpmModel):
        return "fpm"
    raise TypeError(f"unknown model {type(m).__name__}")


def as_measurements(I, m) -> MeasurementSet:
    """Coerce a bare plane stack into a MeasurementSet for model m."""
    if isinstance(I, MeasurementSet):
        return I
    return MeasurementSet(np.asarray(I), modality_of(m), m)


def cdi_forward(u: np.ndarray, m: CdiModel) -> MeasurementSet:
    """Simulate |F(pad(u))|^2, one oversampled plane."""
    if u.shape != (m.object_h, m.object_w):
        raise ValueError("object dims mismatch")
    spec = fft2(zero_pad(u.astype(complex), m.oversample))
    return MeasurementSet(np.abs(spec)[None] ** 2, "cdi", m)


def cdp_forward(u: np.ndarray, m: CdpModel) -> MeasurementSet:
    """Simulate the L modulated diffraction planes |F(u * d_l)|^2."""
    if u.shape != m.object_shape:
        raise ValueError("object dims mismatch")
    planes = np.abs(fft2(m.masks * u[None])) ** 2
    return MeasurementSet(planes, "cdp", m)


def _window_indices(m: FpmModel, dy: int, dx: int):
    # circular window of the centered HR spectrum; the DFT forward model is
    # periodic so wraparound is the exact shift, not an approximation
    hh, hw = m.hr_shape
    lh, lw = m.lr_shape
    y0 = hh // 2 + dy - lh // 2
    x0 = hw // 2 + dx - lw // 2
    iy = (np.arange(lh) + y0) % hh
    ix = (np.arange(lw) + x0) % hw
    return np.ix_(iy, ix)


def fpm_forward(u: np.ndarray, m: FpmModel) -> MeasurementSet:
    """Simulate the per-LED low-resolution intensity stack.

    Implemented as pupil-windowed sub-spectrum crops: tilting the
    illumination by the LED wavevector equals shifting the object spectrum
    by the matching pixel offset.
    """
    if u.shape != m.hr_shape:
        raise ValueError("HR dims mismatch")
    U = _sfft.fftshift(fft2(u))
    planes = np.empty((m.n_leds,) + tuple(m.lr_shape))
    for j, (dy, dx) in enumerate(m.offsets_px):
        W = U[_window_indices(m, dy, dx)]
        psi = ifft2(_sfft.ifftshift(W) * m.pupil)
        planes[j] = np.abs(psi) ** 2
    return MeasurementSet(planes, "fpm", m)


def forward_intensity(u: np.ndarray, m) -> np.ndarray:
    """Dispatch |A u|^2 for any model; returns the raw plane stack."""
    if isinstance(m, CdiModel):
        return cdi_forward(u, m).planes
    if isinstance(m, CdpModel):
        return cdp_forward(u, m).planes
    if isinstance(m, FpmModel):
        return fpm_forward(u, m).planes
    raise TypeError(f"unknown model {type(m).__name__}")


# ---------------------------------------------------------------------------
# magnitude projections


def _cdi_pad_field(v: np.ndarray, m: CdiModel) -> np.ndarray:
    return zero_pad(v.astype(complex), m.oversample)


def _cdi_project_padded(v_pad: np.ndarray, mag: np.ndarray) -> np.ndarray:
    Y = fft2(v_pad)
    phase = np.exp(1j * np.angle(Y))
    return ifft2(mag * phase)


def _cdi_apply_constraints(v: np.ndarray, m: CdiModel) -> np.ndarray:
    out = np.where(m.support_mask, v, 0.0)
    if m.real_nonneg:
        out = np.where(m.support_mask, np.maximum(out.real, 0.0), 0.0).astype(complex)
    return out


def _project_cdi(v, m: CdiModel, planes):
    mag = np.sqrt(np.maximum(planes[0], 0.0))
    out = _cdi_project_padded(_cdi_pad_field(v, m), mag)
    out = crop_center(out, m.object_h, m.object_w)
    return _cdi_apply_constraints(out, m)


def _cdp_backproject(v, d, mag):
    Y = fft2(d * v)
    return np.conj(d) * ifft2(mag * np.exp(1j * np.angle(Y)))


def _project_cdp(v, m: CdpModel, planes):
    mag = np.sqrt(np.maximum(planes, 0.0))
    if m.combine == "average":
        acc = np.zeros_like(v)
        for l in range(m.n_masks):
            acc += _cdp_backproject(v, m.masks[l], mag[l])
        return acc / m.n_masks
    for l in range(m.n_masks):
        v = _cdp_backproject(v, m.masks[l], mag[l])
    return v


def _project_fpm(v, m: FpmModel, planes):
    # one full LED sweep with write-back restricted to the pupil window
    U = _sfft.fftshift(fft2(v))
    pmax = float(np.max(np.abs(m.pupil)) ** 2)
    for j, (dy, dx) in enumerate(m.offsets_px):
        idx = _window_indices(m, dy, dx)
        W = U[idx]
        Psi = _sfft.ifftshift(W) * m.pupil
        psi = ifft2(Psi)
        mag = np.sqrt(np.maximum(planes[j], 0.0))
        Psi2 = fft2(mag * np.exp(1j * np.angle(psi)))
        U[idx] += _sfft.fftshift(np.conj(m.pupil) * (Psi2 - Psi)) / pmax
    return ifft2(_sfft.ifftshift(U))


def magnitude_project(v: np.ndarray, m, I: MeasurementSet) -> np.ndarray:
    """Re-impose measured magnitudes on the iterate, back in object space.

    CDI replaces the padded-spectrum modulus (negatives clamped before the
    square root), inverts, crops and applies the support. CDP back-projects
    each mask plane, either sweeping sequentially (default, converges to
    the joint constraint) or averaging the L per-mask estimates. FPM sweeps
    the LEDs and writes each corrected sub-spectrum back inside the pupil.
    """
    I = as_measurements(I, m)
    if isinstance(m, CdiModel):
        return _project_cdi(v, m, I.planes)
    if isinstance(m, CdpModel):
        return _project_cdp(v, m, I.planes)
    if isinstance(m, FpmModel):
        return _project_fpm(v, m, I.planes)
    raise TypeError(f"unknown model {type(m).__name__}")


def data_residual(v: np.ndarray, m, I: MeasurementSet) -> float:
    """Relative L2 intensity mismatch ||I - |Av|^2|| / ||I||."""
    I = as_measurements(I, m)
    sim = forward_intensity(v, m)
    denom = float(np.linalg.norm(I.planes.ravel()))
    if denom == 0:
        return float(np.linalg.norm(sim.ravel()))
    return float(np.linalg.norm((sim - I.planes).ravel()) / denom)


def magnitude_residual(v: np.ndarray, m, I: MeasurementSet) -> float:
    """Relative L2 magnitude mismatch ||sqrt(I) - |Av||| / ||sqrt(I)||.

    This is the distance to the magnitude constraint set (up to the
    normalization), the quantity an error-reduction sweep is guaranteed
    not to increase. The intensity-form :func:`data_residual` weights
    each bin by ``|Av| + sqrt(I)`` and carries no such guarantee.
    """
    I = as_measurements(I, m)
    mag = np.sqrt(np.maximum(I.planes, 0.0))
    sim = np.sqrt(forward_intensity(v, m))
    denom = float(np.linalg.norm(mag.ravel()))
    if denom == 0:
        return float(np.linalg.norm(sim.ravel()))
    return float(np.linalg.norm((sim - mag).ravel()) / denom)


def spectral_coverage(m: FpmModel) -> float:
    """Fraction of HR spectral bins hit by at least one pupil window."""
    covered = np.zeros(m.hr_shape, dtype=bool)
    # window blocks live in the centered-spectrum frame; shift the pupil
    # footprint (natural order) to match before taking the union
    disk = _sfft.fftshift(np.abs(m.pupil) > 0)
    for dy, dx in m.offsets_px:
        idx = _window_indices(m, dy, dx)
        block = covered[idx]
        covered[idx] = block | disk
    return float(covered.mean())


# ---------------------------------------------------------------------------
# linear pieces used by gradient baselines and initializers


def apply_forward(u: np.ndarray, m) -> np.ndarray:
    """The linear map A as complex planes (before the modulus)."""
    if isinstance(m, CdiModel):
        return fft2(_cdi_pad_field(u, m))[None]
    if isinstance(m, CdpModel):
        return fft2(m.masks * u[None])
    raise TypeError("forward field application is wired for CDI and CDP only")


def apply_adjoint(planes: np.ndarray, m) -> np.ndarray:
    """A^H for the same two modalities; the exact adjoint, not A^-1."""
    if isinstance(m, CdiModel):
        return crop_center(ifft2(planes[0]), m.object_h, m.object_w)
    if isinstance(m, CdpModel):
        return (np.conj(m.masks) * ifft2(planes)).sum(axis=0)
    raise TypeError("adjoint application is wired for CDI and CDP only")


def upsample_bilinear(img: np.ndarray, factor: int) -> np.ndarray:
    """Deterministic bilinear upsampling used by the FPM initializer."""
    return _zoom(img, factor, order=1)
