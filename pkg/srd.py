"""Spectral reflectance decomposition: R(lambda, geometry) ~ r_s(lambda) * r_g(geometry)."""

import logging
from dataclasses import dataclass

import numpy as np

from spectral_core import (
    ReflectanceMatrix,
    build_reflectance_matrix,
    sphere_geometry_pairs,
    table_reflectance_matrix,
)

logger = logging.getLogger(__name__)

DEFAULT_FILTER_THRESHOLD = 0.05

__all__ = [
    "ReflectanceMatrix",
    "SrdDecomposition",
    "decompose",
    "energy_ratio",
    "filter_materials",
    "lambertian_fit",
    "material_report",
    "reconstruct",
    "reconstruction_error",
    "select_bands",
]


@dataclass(frozen=True, eq=False)
class SrdDecomposition:
    """Spectral component r_s (unit norm, nonnegative mean), geometric component r_g, singular values."""

    r_s: np.ndarray
    r_g: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        r_s = np.array(self.r_s, dtype=float).reshape(-1)
        r_g = np.array(self.r_g, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if abs(np.linalg.norm(r_s) - 1.0) > 1e-9:
            raise ValueError("r_s must have unit norm")
        if r_s.mean() < 0:
            raise ValueError("r_s must have a nonnegative mean")
        if sigma.size == 0 or np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
            raise ValueError("sigma must be nonempty, nonnegative and descending")
        for array in (r_s, r_g, sigma):
            array.setflags(write=False)
        object.__setattr__(self, "r_s", r_s)
        object.__setattr__(self, "r_g", r_g)
        object.__setattr__(self, "sigma", sigma)


def _as_matrix(R):
    if isinstance(R, ReflectanceMatrix):
        return R.values
    values = np.asarray(R, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError(f"Expected a nonempty 2-D matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Reflectance matrix entries must be finite")
    return values


def decompose(R):
    """Best rank-1 approximation of R via SVD; sigma_1 is folded into r_g."""
    values = _as_matrix(R)
    u, sigma, vt = np.linalg.svd(values, full_matrices=False)
    r_s = u[:, 0]
    r_g = sigma[0] * vt[0]
    if r_s.mean() < 0:
        r_s, r_g = -r_s, -r_g
    norm = np.linalg.norm(r_s)
    return SrdDecomposition(r_s / norm, r_g * norm, sigma)


def lambertian_fit(R):
    """Constant-geometry baseline: r_s along the row means, r_g = c * 1 with c least-squares optimal."""
    values = _as_matrix(R)
    t, g = values.shape
    row_mean = values.mean(axis=1)
    norm = np.linalg.norm(row_mean)
    if norm == 0:
        return SrdDecomposition(np.full(t, 1.0 / np.sqrt(t)), np.zeros(g), np.zeros(1))
    r_s = row_mean / norm
    if r_s.mean() < 0:
        r_s = -r_s
    scale = float(r_s @ row_mean)
    return SrdDecomposition(r_s, np.full(g, scale), np.array([abs(scale)]))


def reconstruct(d):
    return ReflectanceMatrix(np.outer(d.r_s, d.r_g), geometry="reconstruction")


def reconstruction_error(R, Rp, relative=False):
    """Frobenius norm of R - Rp; relative=True divides by the norm of R (unless R is zero)."""
    a = _as_matrix(R)
    b = _as_matrix(Rp)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} vs {b.shape}")
    error = float(np.linalg.norm(a - b))
    if relative:
        scale = float(np.linalg.norm(a))
        if scale > 0:
            return error / scale
    return error


def energy_ratio(d):
    total = float(np.sum(d.sigma))
    if total == 0:
        return 0.0
    return float(d.sigma[0]) / total


def filter_materials(errors, threshold=DEFAULT_FILTER_THRESHOLD):
    """Names whose reconstruction error is <= threshold, in input order."""
    return [name for name, error in errors if error <= threshold]


def select_bands(R, count):
    """Keep count evenly spaced wavelength rows (first and last included)."""
    values = _as_matrix(R)
    t = values.shape[0]
    if not 1 <= count <= t:
        raise ValueError(f"Band count must be in [1, {t}], got {count}")
    rows = np.unique(np.round(np.linspace(0, t - 1, count)).astype(int))
    if isinstance(R, ReflectanceMatrix):
        return ReflectanceMatrix(
            values[rows],
            name=R.name,
            wavelengths=None if R.wavelengths is None else R.wavelengths[rows],
            geometry=R.geometry,
        )
    return ReflectanceMatrix(values[rows])


def material_report(table, pairs=None, seed=0, bands=None, relative=False):
    """One row of decomposition statistics for a material table.

    Columns use the table's own geometry grid unless pairs (a sample count) is given,
    in which case that many seeded sphere geometry pairs are drawn.
    """
    if pairs is None:
        R = table_reflectance_matrix(table)
    else:
        R = build_reflectance_matrix(table, sphere_geometry_pairs(pairs, seed))
    if bands is not None:
        R = select_bands(R, bands)
    svd = decompose(R)
    baseline = lambertian_fit(R)
    row = {
        "name": table.name,
        "t": R.shape[0],
        "g": R.shape[1],
        "E_r_svd": reconstruction_error(R, reconstruct(svd), relative=relative),
        "E_r_lambertian": reconstruction_error(R, reconstruct(baseline), relative=relative),
        "energy_ratio": energy_ratio(svd),
    }
    logger.debug(f"{table.name}: E_r={row['E_r_svd']:.4g} (lambertian {row['E_r_lambertian']:.4g})")
    return row
