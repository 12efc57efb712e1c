"""File formats: the LPRF raw stack and grayscale PNG.

LPRF layout: 16-byte header (magic b"LPRF", then u32 height, u32 width,
u32 plane count, all little-endian) followed by the planes as contiguous
float32 little-endian row-major data. Complex fields are stored as
interleaved real/imaginary plane pairs.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

LPRF_MAGIC = b"LPRF"
_HEADER = struct.Struct("<4sIII")


def write_lprf(path, planes: np.ndarray) -> None:
    """Write a real plane stack. Accepts (h, w) or (planes, h, w)."""
    planes = np.asarray(planes)
    if planes.ndim == 2:
        planes = planes[None]
    if planes.ndim != 3:
        raise ValueError("expected a 2-D plane or a 3-D stack")
    if np.iscomplexobj(planes):
        raise ValueError("complex data: use write_lprf_complex")
    p, h, w = planes.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LPRF_MAGIC, h, w, p))
        fh.write(np.ascontiguousarray(planes, dtype="<f4").tobytes())


def read_lprf(path) -> np.ndarray:
    """Read a plane stack as float64 with shape (planes, h, w)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, h, w, p = _HEADER.unpack(head)
        if magic != LPRF_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != p * h * w:
        raise ValueError(f"{path}: payload size mismatch")
    return data.reshape(p, h, w).astype(np.float64)


def write_lprf_complex(path, field: np.ndarray) -> None:
    """Write complex planes as real/imag pairs. Accepts (h, w) or (n, h, w)."""
    field = np.asarray(field, dtype=complex)
    if field.ndim == 2:
        field = field[None]
    stack = np.empty((2 * field.shape[0],) + field.shape[1:], dtype=np.float64)
    stack[0::2] = field.real
    stack[1::2] = field.imag
    write_lprf(path, stack)


def read_lprf_complex(path) -> np.ndarray:
    """Read real/imag plane pairs back into a complex stack (n, h, w)."""
    stack = read_lprf(path)
    if stack.shape[0] % 2 != 0:
        raise ValueError(f"{path}: odd plane count, not a complex stack")
    return stack[0::2] + 1j * stack[1::2]


def write_png(path, img: np.ndarray, bits: int = 8,
              lo: float | None = None, hi: float | None = None) -> None:
    """Save a real image as 8- or 16-bit grayscale PNG.

    Values are linearly mapped from [lo, hi] (defaults: image min/max) to
    the full integer range.
    """
    img = np.asarray(img, dtype=float)
    if lo is None:
        lo = float(img.min())
    if hi is None:
        hi = float(img.max())
    span = hi - lo if hi > lo else 1.0
    norm = np.clip((img - lo) / span, 0.0, 1.0)
    if bits == 8:
        Image.fromarray((norm * 255.0).round().astype(np.uint8), mode="L").save(path)
    elif bits == 16:
        Image.fromarray((norm * 65535.0).round().astype(np.uint16)).save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def read_png(path) -> np.ndarray:
    """Load a grayscale PNG scaled to [0, 1] float64. RGB inputs are averaged."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64) / 65535.0
