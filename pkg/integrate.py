"""Normal map integration (Frankot-Chellappa projection onto integrable surfaces)."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft

from spectral_core import NormalMap

logger = logging.getLogger(__name__)

MIN_NORMAL_Z = 0.05


class DegenerateSlopeError(ValueError):
    """Raised when in-mask normals are too grazing to give bounded slopes; pixels lists (row, col)."""

    def __init__(self, message, pixels):
        super().__init__(message)
        self.pixels = pixels


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Depth in pixel units, zero-mean over the mask, NaN outside it."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        values = np.where(mask, np.asarray(self.values, dtype=float), np.nan)
        if values.shape != mask.shape:
            raise ValueError("Depth values and mask must have the same shape")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("In-mask depth must be finite")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self):
        return self.mask.shape[0]

    @property
    def width(self):
        return self.mask.shape[1]


def zero_mean(depth, mask):
    """Subtract the in-mask mean (fixes the additive gauge)."""
    return depth - depth[mask].mean()


def slopes(normals, min_nz=MIN_NORMAL_Z):
    """(d depth / d col, d depth / d row) in pixel units, zero outside the mask.

    Rows grow downward while y points up, so the row derivative is +n_y / n_z.
    """
    vectors = normals.vectors
    mask = normals.mask
    nz = vectors[..., 2]
    steep = mask & (nz < min_nz)
    if np.any(steep):
        pixels = [(int(r), int(c)) for r, c in zip(*np.nonzero(steep), strict=True)]
        raise DegenerateSlopeError(
            f"{len(pixels)} in-mask normals have n_z < {min_nz} (first: {pixels[:5]})", pixels
        )
    safe_nz = np.where(mask, nz, 1.0)
    grad_col = np.where(mask, -vectors[..., 0] / safe_nz, 0.0)
    grad_row = np.where(mask, vectors[..., 1] / safe_nz, 0.0)
    return grad_col, grad_row


def integrate_gradients(grad_col, grad_row):
    """Least-squares integrable surface for a gradient field on the full rectangle.

    The mean gradient is integrated as an explicit plane; the remainder is projected in the
    frequency domain with the ideal derivative response i*w (the DC mode is set to zero).
    """
    height, width = grad_col.shape
    mean_col = grad_col.mean()
    mean_row = grad_row.mean()
    rows, cols = np.mgrid[0:height, 0:width].astype(float)
    plane = mean_col * cols + mean_row * rows

    wx = 2 * np.pi * fft.fftfreq(width)
    wy = 2 * np.pi * fft.fftfreq(height)
    dx = 1j * wx[None, :]
    dy = 1j * wy[:, None]
    denominator = np.abs(dx) ** 2 + np.abs(dy) ** 2
    numerator = np.conj(dx) * fft.fft2(grad_col - mean_col) + np.conj(dy) * fft.fft2(grad_row - mean_row)
    null = denominator < 1e-12
    spectrum = np.where(null, 0.0, numerator / np.where(null, 1.0, denominator))
    return plane + np.real(fft.ifft2(spectrum))


def integrate_fc(normals, min_nz=MIN_NORMAL_Z):
    """Integrate a normal map into a zero-mean depth map (zero-gradient padding outside the mask)."""
    if normals.pixel_count == 0:
        raise ValueError("Cannot integrate an empty normal map")
    grad_col, grad_row = slopes(normals, min_nz)
    depth = integrate_gradients(grad_col, grad_row)
    depth = zero_mean(depth, normals.mask)
    logger.debug(f"Integrated {normals.pixel_count} pixels, depth span {np.ptp(depth[normals.mask]):.3f}")
    return DepthMap(depth, normals.mask)


def normals_from_depth(depth, mask=None):
    """Unit normals of a height field from np.gradient slopes (the inverse of slopes)."""
    grad_row, grad_col = np.gradient(np.asarray(depth, dtype=float))
    vectors = np.stack([-grad_col, grad_row, np.ones_like(grad_col)], axis=-1)
    vectors /= np.linalg.norm(vectors, axis=-1, keepdims=True)
    return NormalMap(vectors, np.ones(vectors.shape[:2], dtype=bool) if mask is None else mask)
