"""Spectral reflectance, lighting and image types shared by every other module.

Conventions used throughout the package:

- Directions are unit 3-vectors in camera coordinates: x to the right, y up, z toward
  the camera. Image rows run top to bottom, so row index grows with -y.
- A spectral BRDF table is sampled on (wavelength, cosNL, cosNH) with a fixed view
  direction; cosNL = n.l and cosNH = n.h with h = normalize(l + view).
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

DEFAULT_VIEW = (0.0, 0.0, 1.0)
UNIT_TOLERANCE = 1e-9
NORMAL_TOLERANCE = 1e-6

DEFAULT_WAVELENGTH_RANGE = (360.0, 1000.0)
DEFAULT_TABLE_WAVELENGTHS = 65
DEFAULT_COS_NL_SAMPLES = 33
DEFAULT_COS_NH_SAMPLES = 201


class WavelengthRangeError(ValueError):
    """Raised when a wavelength falls outside a table's grid (tables never extrapolate)."""


def normalize(vectors):
    """Normalize vectors along the last axis."""
    vectors = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / norms


def as_unit_vector(vector, name="vector", tolerance=UNIT_TOLERANCE):
    """Return vector as a float array, checking it is a unit 3-vector."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape[-1:] != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {vector.shape}")
    norms = np.linalg.norm(vector, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= tolerance):
        raise ValueError(f"{name} must be unit-norm within {tolerance}")
    return vector


def geometry_cosines(normals, light, view=DEFAULT_VIEW):
    """Return (cosNL, cosNH) for normals of shape (..., 3) under one light and the view."""
    normals = np.asarray(normals, dtype=float)
    light = np.asarray(light, dtype=float)
    half = normalize(light + np.asarray(view, dtype=float))
    return normals @ light, normals @ half


def _is_uniform_unit_axis(axis):
    steps = np.diff(axis)
    return (
        axis.ndim == 1
        and axis.size >= 2
        and abs(axis[0]) <= 1e-12
        and abs(axis[-1] - 1.0) <= 1e-12
        and np.allclose(steps, steps[0], rtol=1e-6, atol=0.0)
        and steps[0] > 0
    )


@dataclass(frozen=True, eq=False)
class WavelengthGrid:
    """Strictly increasing wavelengths in nanometers."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("A wavelength grid needs at least 2 samples")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("Wavelengths must be finite and positive")
        if np.any(np.diff(values) <= 0):
            raise ValueError("Wavelengths must be strictly increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, lo, hi, count):
        return cls(np.linspace(lo, hi, count))

    def __len__(self):
        return self.values.size

    @property
    def lo(self):
        return float(self.values[0])

    @property
    def hi(self):
        return float(self.values[-1])

    def contains(self, wavelengths):
        wavelengths = np.asarray(wavelengths, dtype=float)
        return bool(np.all((wavelengths >= self.lo) & (wavelengths <= self.hi)))


@dataclass(frozen=True, eq=False)
class SpectralBrdfTable:
    """Reflectance R(lambda, cosNL, cosNH) tabulated on a uniform geometry grid over [0, 1]^2."""

    wavelengths: WavelengthGrid
    cos_nl_axis: np.ndarray
    cos_nh_axis: np.ndarray
    values: np.ndarray
    name: str = "material"

    def __post_init__(self):
        cos_nl_axis = np.array(self.cos_nl_axis, dtype=float)
        cos_nh_axis = np.array(self.cos_nh_axis, dtype=float)
        values = np.array(self.values, dtype=float)
        for label, axis in (("cosNL", cos_nl_axis), ("cosNH", cos_nh_axis)):
            if not _is_uniform_unit_axis(axis):
                raise ValueError(f"{label} axis must be uniformly spaced over [0, 1] with >= 2 samples")
        expected = (len(self.wavelengths), cos_nl_axis.size, cos_nh_axis.size)
        if values.shape != expected:
            raise ValueError(f"Table values have shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"Table {self.name!r} must hold finite, nonnegative values")
        for array in (cos_nl_axis, cos_nh_axis, values):
            array.setflags(write=False)
        object.__setattr__(self, "cos_nl_axis", cos_nl_axis)
        object.__setattr__(self, "cos_nh_axis", cos_nh_axis)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @cached_property
    def _interpolator(self):
        return RegularGridInterpolator(
            (self.wavelengths.values, self.cos_nl_axis, self.cos_nh_axis),
            self.values,
            method="linear",
            bounds_error=True,
        )

    def check_wavelengths(self, wavelengths):
        if not self.wavelengths.contains(wavelengths):
            raise WavelengthRangeError(
                f"Wavelengths outside [{self.wavelengths.lo}, {self.wavelengths.hi}] nm "
                f"of table {self.name!r}"
            )

    def evaluate(self, wavelengths, cos_nl, cos_nh):
        """Trilinear lookup with broadcasting; cosines are clipped to [0, 1], wavelengths are not."""
        self.check_wavelengths(wavelengths)
        wavelengths, cos_nl, cos_nh = np.broadcast_arrays(
            np.asarray(wavelengths, dtype=float),
            np.clip(np.asarray(cos_nl, dtype=float), 0.0, 1.0),
            np.clip(np.asarray(cos_nh, dtype=float), 0.0, 1.0),
        )
        points = np.stack([wavelengths.ravel(), cos_nl.ravel(), cos_nh.ravel()], axis=-1)
        return self._interpolator(points).reshape(wavelengths.shape)

    def scaled(self, alpha):
        return replace(self, values=self.values * alpha)


@dataclass(frozen=True, eq=False)
class ReflectanceMatrix:
    """Reflectance samples R[i, k] for wavelength i and geometry pair k."""

    values: np.ndarray
    name: str = ""
    wavelengths: np.ndarray | None = None
    geometry: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"A reflectance matrix must be 2-D and nonempty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Reflectance matrix entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def measured(cls, values, **provenance):
        """Build a matrix from observed data, which must be entrywise nonnegative."""
        matrix = cls(values, **provenance)
        if np.any(matrix.values < 0):
            raise ValueError("Measured reflectance must be nonnegative")
        return matrix

    @property
    def shape(self):
        return self.values.shape


def sample_brdf(table, n, l, view, wavelength):
    """Evaluate R(n, l, lambda) from a table; backfacing configurations (n.l <= 0) return 0."""
    n = as_unit_vector(n, "n")
    l = as_unit_vector(l, "l")
    view = as_unit_vector(view, "view")
    table.check_wavelengths(wavelength)
    if n @ l <= 0:
        return 0.0
    cos_nl, cos_nh = geometry_cosines(n, l, view)
    return float(table.evaluate(wavelength, cos_nl, cos_nh))


def build_reflectance_matrix(table, geom_pairs, wavelengths=None, view=DEFAULT_VIEW):
    """Assemble R with one row per wavelength (ascending) and one column per (n, l) pair, in input order."""
    pairs = np.asarray(geom_pairs, dtype=float)
    if pairs.size == 0:
        raise ValueError("geom_pairs must not be empty")
    if pairs.ndim != 3 or pairs.shape[1:] != (2, 3):
        raise ValueError(f"geom_pairs must be a sequence of (n, l) 3-vector pairs, got shape {pairs.shape}")
    normals = as_unit_vector(pairs[:, 0], "n")
    lights = as_unit_vector(pairs[:, 1], "l")
    cos_nl = np.einsum("ij,ij->i", normals, lights)
    if np.any(cos_nl <= 0):
        raise ValueError("Every geometry pair must satisfy n.l > 0")
    half = normalize(lights + np.asarray(view, dtype=float))
    cos_nh = np.einsum("ij,ij->i", normals, half)
    grid = table.wavelengths if wavelengths is None else wavelengths
    values = table.evaluate(grid.values[:, None], cos_nl[None, :], cos_nh[None, :])
    return ReflectanceMatrix.measured(
        values,
        name=table.name,
        wavelengths=grid.values,
        geometry=f"pairs:{pairs.shape[0]}",
    )


def table_reflectance_matrix(table):
    """Reshape a table into R using its own geometry nodes as columns (cosNL-major order)."""
    t, a, b = table.shape
    return ReflectanceMatrix.measured(
        table.values.reshape(t, a * b),
        name=table.name,
        wavelengths=table.wavelengths.values,
        geometry=f"grid:{a}x{b}",
    )


def sphere_geometry_pairs(count, seed=0, view=DEFAULT_VIEW):
    """Seeded (n, l) pairs: normals uniform over the visible hemisphere, lights uniform over n.l > 0."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    view = np.asarray(view, dtype=float)

    z = rng.uniform(0.0, 1.0, count)
    phi = rng.uniform(0.0, 2 * np.pi, count)
    radial = np.sqrt(1.0 - z**2)
    normals = np.stack([radial * np.cos(phi), radial * np.sin(phi), z], axis=-1)
    normals = _align_to(normals, view)

    lights = normalize(rng.normal(size=(count, 3)))
    cos_nl = np.einsum("ij,ij->i", normals, lights)
    lights = np.where(cos_nl[:, None] < 0, lights - 2 * cos_nl[:, None] * normals, lights)
    # measure-zero grazing draws are nudged toward the normal
    grazing = np.einsum("ij,ij->i", normals, lights) <= 1e-6
    lights[grazing] = normalize(lights[grazing] + 1e-3 * normals[grazing])
    return np.stack([normals, normalize(lights)], axis=1)


def _align_to(vectors, axis):
    """Rotate vectors expressed around +z so that +z maps to axis."""
    axis = normalize(axis)
    z = np.array([0.0, 0.0, 1.0])
    cross = np.cross(z, axis)
    sin = np.linalg.norm(cross)
    cos = float(z @ axis)
    if sin < 1e-12:
        return vectors if cos > 0 else -vectors
    k = cross / sin
    skew = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    rotation = np.eye(3) + sin * skew + (1 - cos) * skew @ skew
    return vectors @ rotation.T


@dataclass(frozen=True, eq=False)
class LightingRig:
    """Calibrated spectral lights: one direction, radiance and band per light/camera channel."""

    wavelengths: WavelengthGrid
    directions: np.ndarray
    radiances: np.ndarray
    bands: np.ndarray
    light_spectra: np.ndarray
    camera_sensitivity: np.ndarray
    view: np.ndarray = DEFAULT_VIEW

    def __post_init__(self):
        directions = np.array(self.directions, dtype=float).reshape(-1, 3)
        count = directions.shape[0]
        radiances = np.array(self.radiances, dtype=float).reshape(-1)
        bands = np.array(self.bands, dtype=float).reshape(-1, 2)
        shape = (count, len(self.wavelengths))
        light_spectra = np.array(self.light_spectra, dtype=float)
        sensitivity = np.array(self.camera_sensitivity, dtype=float)
        view = as_unit_vector(np.array(self.view, dtype=float), "view")

        if count < 1:
            raise ValueError("A rig needs at least one light")
        as_unit_vector(directions, "light directions")
        if radiances.shape != (count,) or np.any(~np.isfinite(radiances)) or np.any(radiances <= 0):
            raise ValueError("Rig radiances must be one positive value per light")
        if bands.shape != (count, 2) or np.any(bands[:, 1] <= bands[:, 0]):
            raise ValueError("Each band must be an interval [lo, hi] with lo < hi")
        if light_spectra.shape != shape or sensitivity.shape != shape:
            raise ValueError(f"Spectra and sensitivities must have shape {shape}")
        if np.any(light_spectra < 0) or np.any(sensitivity < 0):
            raise ValueError("Spectra and sensitivities must be nonnegative")

        # intervals may touch but not overlap
        order = np.argsort(bands[:, 0], kind="stable")
        sorted_bands = bands[order]
        if np.any(sorted_bands[1:, 0] < sorted_bands[:-1, 1]):
            raise ValueError("Bands must be pairwise disjoint (negligible crosstalk)")
        grid = self.wavelengths.values
        outside = (grid[None, :] < bands[:, :1]) | (grid[None, :] > bands[:, 1:])
        if np.any(sensitivity[outside] != 0):
            raise ValueError("Camera sensitivity must be zero outside its band")

        for array in (directions, radiances, bands, light_spectra, sensitivity, view):
            array.setflags(write=False)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "radiances", radiances)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "light_spectra", light_spectra)
        object.__setattr__(self, "camera_sensitivity", sensitivity)
        object.__setattr__(self, "view", view)

    @property
    def count(self):
        return self.directions.shape[0]

    def check_band(self, j):
        if not 0 <= j < self.count:
            raise ValueError(f"Band index {j} out of range for a rig with {self.count} bands")

    def band_samples(self, j):
        """Return (wavelengths, C_j * E_j) restricted to the closed band interval."""
        self.check_band(j)
        grid = self.wavelengths.values
        lo, hi = self.bands[j]
        inside = (grid >= lo) & (grid <= hi)
        weights = self.camera_sensitivity[j, inside] * self.light_spectra[j, inside]
        return grid[inside], weights

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return replace(
            self,
            directions=self.directions[indices],
            radiances=self.radiances[indices],
            bands=self.bands[indices],
            light_spectra=self.light_spectra[indices],
            camera_sensitivity=self.camera_sensitivity[indices],
        )

    def with_radiances(self, radiances):
        return replace(self, radiances=np.asarray(radiances, dtype=float))

    def rotated(self, rotation):
        """Rotate the light directions (the view stays fixed)."""
        return replace(self, directions=self.directions @ np.asarray(rotation, dtype=float).T)


def fibonacci_cap_directions(count, max_polar_deg=60.0):
    """Directions spread uniformly over the cap of the upper hemisphere within max_polar_deg of +z."""
    if count < 1:
        raise ValueError("count must be positive")
    golden_angle = math.pi * (3.0 - math.sqrt(5.0))
    k = np.arange(count)
    z = 1.0 - (1.0 - math.cos(math.radians(max_polar_deg))) * (k + 0.5) / count
    radial = np.sqrt(1.0 - z**2)
    phi = k * golden_angle
    return normalize(np.stack([radial * np.cos(phi), radial * np.sin(phi), z], axis=-1))


def boxcar_rig(
    directions,
    radiances=None,
    wavelength_range=DEFAULT_WAVELENGTH_RANGE,
    samples_per_band=5,
    view=DEFAULT_VIEW,
):
    """Rig whose bands tile wavelength_range uniformly, with unit-integral boxcar sensitivities."""
    directions = normalize(np.asarray(directions, dtype=float).reshape(-1, 3))
    count = directions.shape[0]
    if samples_per_band < 1:
        raise ValueError("samples_per_band must be >= 1")
    grid = np.linspace(wavelength_range[0], wavelength_range[1], count * samples_per_band + 1)
    edges = grid[::samples_per_band]
    bands = np.stack([edges[:-1], edges[1:]], axis=-1)
    inside = (grid[None, :] >= bands[:, :1]) & (grid[None, :] <= bands[:, 1:])
    sensitivity = np.where(inside, 1.0 / (bands[:, 1:] - bands[:, :1]), 0.0)
    return LightingRig(
        wavelengths=WavelengthGrid(grid),
        directions=directions,
        radiances=np.ones(count) if radiances is None else radiances,
        bands=bands,
        light_spectra=np.ones((count, grid.size)),
        camera_sensitivity=sensitivity,
        view=view,
    )


def uniform_rig(count=39, max_polar_deg=60.0, **kwargs):
    """The default calibrated rig: count uniformly spread directions, one band each."""
    return boxcar_rig(fibonacci_cap_directions(count, max_polar_deg), **kwargs)


@dataclass(frozen=True, eq=False)
class MultispectralImage:
    """Per-band observation planes (bands, height, width) sharing one foreground mask."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if data.ndim != 3:
            raise ValueError(f"Image data must be (bands, height, width), got shape {data.shape}")
        if mask.shape != data.shape[1:]:
            raise ValueError(f"Mask shape {mask.shape} does not match image planes {data.shape[1:]}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("Image data must be finite and nonnegative")
        data.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_observations(cls, observations, mask):
        """Scatter (bands, p) in-mask observations back into planes, zero outside the mask."""
        mask = np.asarray(mask, dtype=bool)
        observations = np.asarray(observations, dtype=float)
        data = np.zeros((observations.shape[0], *mask.shape))
        data[:, mask] = observations
        return cls(data, mask)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def pixel_count(self):
        return int(self.mask.sum())

    def observations(self):
        """In-mask values as (bands, p), pixels in row-major order."""
        return self.data[:, self.mask]

    def scaled(self, alpha):
        return MultispectralImage(self.data * alpha, self.mask)

    def select_bands(self, indices):
        return MultispectralImage(self.data[np.asarray(indices, dtype=int)], self.mask)


@dataclass(frozen=True, eq=False)
class NormalMap:
    """Unit camera-facing normals (height, width, 3); pixels outside mask are null and stored as 0."""

    vectors: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if vectors.ndim != 3 or vectors.shape[2] != 3 or mask.shape != vectors.shape[:2]:
            raise ValueError("Normals must be (height, width, 3) with a matching (height, width) mask")
        inside = vectors[mask]
        if not np.all(np.isfinite(inside)):
            raise ValueError("In-mask normals must be finite")
        if np.any(np.abs(np.linalg.norm(inside, axis=-1) - 1.0) > NORMAL_TOLERANCE):
            raise ValueError(f"In-mask normals must be unit-norm within {NORMAL_TOLERANCE}")
        if np.any(inside[:, 2] <= 0):
            raise ValueError("In-mask normals must face the camera (n_z > 0)")
        vectors[~mask] = 0.0
        vectors.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self):
        return self.mask.shape[0]

    @property
    def width(self):
        return self.mask.shape[1]

    @property
    def pixel_count(self):
        return int(self.mask.sum())

    def in_mask(self):
        return self.vectors[self.mask]

    def restrict(self, mask):
        return NormalMap(self.vectors, self.mask & np.asarray(mask, dtype=bool))

    def rotated(self, rotation):
        return NormalMap(self.vectors @ np.asarray(rotation, dtype=float).T, self.mask)


# ---------------------------------------------------------------------------
# Analytic material tables


def gaussian_spectrum(wavelengths, center, width, peak=1.0, floor=0.0):
    wavelengths = np.asarray(wavelengths, dtype=float)
    return floor + (peak - floor) * np.exp(-0.5 * ((wavelengths - center) / width) ** 2)


def _default_axes(
    wavelengths=None, cos_nl_samples=DEFAULT_COS_NL_SAMPLES, cos_nh_samples=DEFAULT_COS_NH_SAMPLES
):
    if wavelengths is None:
        wavelengths = WavelengthGrid.uniform(*DEFAULT_WAVELENGTH_RANGE, DEFAULT_TABLE_WAVELENGTHS)
    return wavelengths, np.linspace(0.0, 1.0, cos_nl_samples), np.linspace(0.0, 1.0, cos_nh_samples)


def tabulate(name, function, wavelengths=None, **axes):
    """Tabulate function(lambda, cosNL, cosNH) (broadcast over the grid) into a table."""
    wavelengths, cos_nl, cos_nh = _default_axes(wavelengths, **axes)
    values = function(
        wavelengths.values[:, None, None],
        cos_nl[None, :, None],
        cos_nh[None, None, :],
    )
    values = np.broadcast_to(values, (len(wavelengths), cos_nl.size, cos_nh.size))
    return SpectralBrdfTable(wavelengths, cos_nl, cos_nh, values, name=name)


def blinn_phong_lobe(cos_nh, shininess):
    return np.clip(cos_nh, 0.0, 1.0) ** shininess


def ggx_lobe(cos_nh, roughness):
    """GGX distribution scaled to peak 1 at cosNH = 1."""
    alpha2 = roughness**4
    cos2 = np.clip(cos_nh, 0.0, 1.0) ** 2
    return alpha2**2 / (cos2 * (alpha2 - 1.0) + 1.0) ** 2


def lambertian_material(name="white_lambertian", albedo=1.0, spectrum=None, wavelengths=None, **axes):
    """Geometry-independent reflectance; spectrum is a callable of wavelength or None for flat."""

    def function(lam, cos_nl, cos_nh):
        return albedo * (np.ones_like(lam) if spectrum is None else spectrum(lam))

    return tabulate(name, function, wavelengths, **axes)


def separable_material(name, spectrum, geometry, wavelengths=None, **axes):
    """R = spectrum(lambda) * geometry(cosNL, cosNH): exactly rank-1 on its grid."""

    def function(lam, cos_nl, cos_nh):
        return spectrum(lam) * geometry(cos_nl, cos_nh)

    return tabulate(name, function, wavelengths, **axes)


def phong_material(
    name, diffuse, specular, shininess=100.0, specular_weight=0.5, wavelengths=None, **axes
):
    """Diffuse spectrum plus a Blinn-Phong lobe; separable only when the two spectra are proportional."""

    def function(lam, cos_nl, cos_nh):
        return diffuse(lam) + specular_weight * specular(lam) * blinn_phong_lobe(cos_nh, shininess)

    return tabulate(name, function, wavelengths, **axes)


def microfacet_material(
    name, diffuse, specular, roughness=0.3, specular_weight=1.0, wavelengths=None, **axes
):
    def function(lam, cos_nl, cos_nh):
        return diffuse(lam) + specular_weight * specular(lam) * ggx_lobe(cos_nh, roughness)

    return tabulate(name, function, wavelengths, **axes)


def hue_shift_material(name="sunset_shift", shift_nm=250.0, width=60.0, wavelengths=None, **axes):
    """Spectral peak moves with the light angle, so no single spectrum explains every geometry."""

    def function(lam, cos_nl, cos_nh):
        center = 450.0 + shift_nm * cos_nl
        return 0.05 + 0.8 * np.exp(-0.5 * ((lam - center) / width) ** 2) + 0.2 * blinn_phong_lobe(cos_nh, 50)

    return tabulate(name, function, wavelengths, **axes)


def _flat(value):
    return lambda lam: np.full_like(np.asarray(lam, dtype=float), value)


MATERIAL_PRESETS = {
    "white_lambertian": lambda **kw: lambertian_material("white_lambertian", **kw),
    "blue_paper": lambda **kw: lambertian_material(
        "blue_paper", spectrum=lambda lam: gaussian_spectrum(lam, 460.0, 45.0, peak=0.8, floor=0.08), **kw
    ),
    "gray_plastic": lambda **kw: phong_material("gray_plastic", _flat(0.5), _flat(1.0), 100.0, 1.0, **kw),
    "green_plastic": lambda **kw: phong_material(
        "green_plastic",
        lambda lam: gaussian_spectrum(lam, 540.0, 40.0, peak=0.7, floor=0.05),
        _flat(1.0),
        80.0,
        0.6,
        **kw,
    ),
    "gold_metal": lambda **kw: microfacet_material(
        "gold_metal",
        lambda lam: 0.1 * gaussian_spectrum(lam, 650.0, 150.0, peak=1.0, floor=0.3),
        lambda lam: gaussian_spectrum(lam, 650.0, 150.0, peak=1.0, floor=0.3),
        roughness=0.3,
        **kw,
    ),
    "sunset_shift": lambda **kw: hue_shift_material("sunset_shift", **kw),
}


def make_material(name, **kwargs):
    """Build a preset material table by name."""
    if name not in MATERIAL_PRESETS:
        raise ValueError(f"Unknown material preset {name!r}; choose from {sorted(MATERIAL_PRESETS)}")
    return MATERIAL_PRESETS[name](**kwargs)
