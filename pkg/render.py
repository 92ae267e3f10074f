"""Forward image formation and synthetic multispectral dataset generation."""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator
from tqdm import tqdm

import config
import io_utils
from spectral_core import (
    DEFAULT_VIEW,
    MATERIAL_PRESETS,
    MultispectralImage,
    NormalMap,
    as_unit_vector,
    boxcar_rig,
    fibonacci_cap_directions,
    make_material,
    normalize,
    table_reflectance_matrix,
)
from srd import decompose

logger = logging.getLogger(__name__)

DEFAULT_JITTER_RANGE = (0.1, 1.0)
DEFAULT_RESOLUTION = 128
DEFAULT_RADIUS_FRACTION = 0.4
MIN_NORMAL_Z = 0.05
CHUNK_SIZE = 4096

# Random stream purposes, combined with (seed, band) into independent streams
JITTER = 0
NOISE = 1
SUBSET = 2


class DegenerateBandError(ValueError):
    """Raised when a band's spectral integral is zero (band outside the material's spectral support)."""


@dataclass(frozen=True, eq=False)
class EquivalentIntensities:
    """Per-band equivalent light intensities e'_j."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size == 0 or not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("Equivalent intensities must be finite and positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def normalized(self):
        """Scale gauge: max_j e'_j = 1."""
        return EquivalentIntensities(self.values / self.values.max())

    def tolist(self):
        return [float(v) for v in self.values]


@dataclass(frozen=True)
class SphereShape:
    """Orthographic analytic sphere; center (cx, cy) in pixels defaults to the image center."""

    resolution: int = DEFAULT_RESOLUTION
    radius: float | None = None
    center: tuple[float, float] | None = None
    min_nz: float = MIN_NORMAL_Z

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("Sphere resolution must be positive")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("Sphere radius must be positive")

    @property
    def pixel_radius(self):
        return DEFAULT_RADIUS_FRACTION * self.resolution if self.radius is None else float(self.radius)

    def normals(self):
        size = self.resolution
        cx, cy = ((size - 1) / 2.0, (size - 1) / 2.0) if self.center is None else self.center
        rows, cols = np.mgrid[0:size, 0:size].astype(float)
        x = (cols - cx) / self.pixel_radius
        y = (cy - rows) / self.pixel_radius
        r2 = x**2 + y**2
        z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
        mask = (r2 < 1.0) & (z >= self.min_nz)
        vectors = np.stack([x, y, z], axis=-1)
        vectors[~mask] = 0.0
        return NormalMap(vectors, mask)


@dataclass(frozen=True)
class NormalMapShape:
    """Shape given as a 3-channel normal PFM (zero vectors are background)."""

    path: Path

    def normals(self):
        return io_utils.read_normals(self.path)


@dataclass(frozen=True, eq=False)
class SceneSpec:
    shape: SphereShape | NormalMapShape
    material: object
    rig: object
    noise_sigma: float = 0.0
    jitter_range: tuple[float, float] | None = DEFAULT_JITTER_RANGE
    name: str = "scene"

    def __post_init__(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.jitter_range is not None:
            lo, hi = self.jitter_range
            if not 0 < lo <= hi <= 1:
                raise ValueError(f"jitter_range must lie within (0, 1], got {self.jitter_range}")


# ---------------------------------------------------------------------------
# Image formation


def render_pixel(n, rig, j, material):
    """m_j = e_j * max(n.l_j, 0) * integral over the band of R * C_j * E_j (trapezoidal)."""
    rig.check_band(j)
    n = as_unit_vector(n, "n")
    light = rig.directions[j]
    cos_nl = float(n @ light)
    if cos_nl <= 0:
        return 0.0
    cos_nh = float(n @ normalize(light + rig.view))
    wavelengths, weights = rig.band_samples(j)
    reflectance = material.evaluate(wavelengths, cos_nl, cos_nh)
    return float(rig.radiances[j] * cos_nl * trapezoid(reflectance * weights, wavelengths))


def render_pixel_reduced(n, l, e_prime, r_g_fn):
    """m = e' * R_g(n, l) * max(n.l, 0)."""
    n = np.asarray(n, dtype=float)
    l = np.asarray(l, dtype=float)
    cos_nl = float(n @ l)
    if cos_nl <= 0:
        return 0.0
    return float(e_prime * r_g_fn(n, l) * cos_nl)


def equivalent_intensity(rig, j, r_s):
    """e'_j = e_j * integral over the band of r_s * C_j * E_j; r_s is sampled on the rig grid."""
    rig.check_band(j)
    r_s = np.asarray(r_s, dtype=float)
    if r_s.shape != (len(rig.wavelengths),):
        raise ValueError(f"r_s must be sampled on the rig grid ({len(rig.wavelengths)} values)")
    grid = rig.wavelengths.values
    lo, hi = rig.bands[j]
    inside = (grid >= lo) & (grid <= hi)
    wavelengths, weights = rig.band_samples(j)
    integral = float(trapezoid(r_s[inside] * weights, wavelengths))
    if integral <= 0:
        raise DegenerateBandError(f"Band {j} [{lo}, {hi}] nm has zero spectral integral")
    return float(rig.radiances[j] * integral)


def equivalent_intensities(rig, r_s):
    return EquivalentIntensities([equivalent_intensity(rig, j, r_s) for j in range(rig.count)])


def spectral_component_on_grid(material, rig, decomposition=None):
    """The material's SRD spectral component, linearly resampled onto the rig grid."""
    material.check_wavelengths(rig.wavelengths.values)
    if decomposition is None:
        decomposition = decompose(table_reflectance_matrix(material))
    return np.interp(rig.wavelengths.values, material.wavelengths.values, decomposition.r_s)


def geometric_component_fn(material, decomposition=None, view=DEFAULT_VIEW):
    """r_g(n, l): the SRD geometric component bilinearly interpolated over (cosNL, cosNH)."""
    if decomposition is None:
        decomposition = decompose(table_reflectance_matrix(material))
    _, a, b = material.shape
    interpolator = RegularGridInterpolator(
        (material.cos_nl_axis, material.cos_nh_axis),
        decomposition.r_g.reshape(a, b),
        method="linear",
        bounds_error=True,
    )
    view = np.asarray(view, dtype=float)

    def r_g_fn(n, l):
        n = np.asarray(n, dtype=float)
        l = np.asarray(l, dtype=float)
        cos_nl = np.clip(n @ l, 0.0, 1.0)
        cos_nh = np.clip(n @ normalize(l + view), 0.0, 1.0)
        return float(interpolator([[cos_nl, cos_nh]])[0])

    return r_g_fn


def _stream(seed, band, purpose):
    return np.random.default_rng([seed, band, purpose])


def draw_jitter(count, jitter_range, seed):
    """Per-band radiance multipliers, one independent stream per band."""
    if jitter_range is None:
        return np.ones(count)
    lo, hi = jitter_range
    return np.array([_stream(seed, j, JITTER).uniform(lo, hi) for j in range(count)])


def _render_chunk(normals, rig, material):
    """Noiseless observations (bands, pixels) for a block of in-mask normals."""
    observations = np.zeros((rig.count, normals.shape[0]))
    for j in range(rig.count):
        light = rig.directions[j]
        cos_nl = normals @ light
        lit = cos_nl > 0
        if not np.any(lit):
            continue
        cos_nh = normals[lit] @ normalize(light + rig.view)
        wavelengths, weights = rig.band_samples(j)
        reflectance = material.evaluate(wavelengths[None, :], cos_nl[lit, None], cos_nh[:, None])
        integral = trapezoid(reflectance * weights[None, :], wavelengths, axis=1)
        observations[j, lit] = rig.radiances[j] * cos_nl[lit] * integral
    return observations


def render_image(scene, seed=0, threads=None):
    """Render a scene; returns (image, ground-truth normals, ground-truth equivalent intensities)."""
    normal_map = scene.shape.normals()
    rig = scene.rig
    scene.material.check_wavelengths(rig.wavelengths.values)
    if normal_map.pixel_count == 0:
        raise ValueError(f"Scene {scene.name!r} has an empty mask")

    jitter = draw_jitter(rig.count, scene.jitter_range, seed)
    rig = rig.with_radiances(rig.radiances * jitter)

    pixels = normal_map.in_mask()
    chunks = [pixels[start : start + CHUNK_SIZE] for start in range(0, len(pixels), CHUNK_SIZE)]
    with ThreadPoolExecutor(max_workers=config.get_thread_count(threads)) as executor:
        blocks = list(executor.map(lambda block: _render_chunk(block, rig, scene.material), chunks))
    observations = np.concatenate(blocks, axis=1)

    if scene.noise_sigma > 0:
        for j in range(rig.count):
            noise = _stream(seed, j, NOISE).normal(0.0, scene.noise_sigma, size=observations.shape[1])
            observations[j] = np.maximum(observations[j] + noise, 0.0)

    e_prime = equivalent_intensities(rig, spectral_component_on_grid(scene.material, rig))
    image = MultispectralImage.from_observations(observations, normal_map.mask)
    logger.debug(f"Rendered {scene.name!r}: {rig.count} bands, {normal_map.pixel_count} pixels")
    return image, normal_map, e_prime


# ---------------------------------------------------------------------------
# Datasets


def select_directions(f, t, seed=0, draw=0):
    """Sorted seeded t-subset of range(f); t == f selects every direction."""
    if t < 1:
        raise ValueError(f"Band count t must be >= 1, got {t}")
    if t > f:
        raise ValueError(f"Cannot select t={t} directions out of f={f}")
    if t == f:
        return np.arange(f)
    return np.sort(_stream(seed, draw, SUBSET).choice(f, size=t, replace=False))


def rendered_rig(meta):
    """The stack's rig with the radiance jitter it was rendered with."""
    rig = io_utils.stack_rig(meta)
    jitter = np.asarray(meta.get("jitter", np.ones(rig.count)), dtype=float)
    return rig.with_radiances(rig.radiances * jitter)


def render_stack(scene, out_dir, seed=0, t=None, draw=0, threads=None, rig_source=None):
    """Select t of the rig's directions, render with the sub-rig and write a stack directory."""
    f = scene.rig.count
    indices = select_directions(f, f if t is None else t, seed, draw)
    sub_scene = replace(scene, rig=scene.rig.subset(indices))
    image, normals, e_prime = render_image(sub_scene, seed, threads)
    meta = {
        "scene": scene.name,
        "material": scene.material.name,
        "rig": io_utils.rig_to_dict(sub_scene.rig),
        "rig_source": rig_source,
        "selected_indices": [int(i) for i in indices],
        "seed": int(seed),
        "e_prime_gt": e_prime.tolist(),
        "jitter": draw_jitter(len(indices), scene.jitter_range, seed).tolist(),
        "noise_sigma": float(scene.noise_sigma),
        "width": image.width,
        "height": image.height,
    }
    io_utils.write_stack(out_dir, image, normals, meta)
    return Path(out_dir), meta


def make_dataset(scenes, t, out_dir, f=None, seed=0, threads=None, quiet=False):
    """Render one stack per scene, each with its own seeded t-subset of the f rig directions."""
    out_dir = Path(out_dir)
    entries = []
    for k, scene in enumerate(tqdm(scenes, desc="Rendering scenes", disable=quiet)):
        pool = scene.rig.count
        if f is not None and f != pool:
            raise ValueError(f"Scene {scene.name!r} has {pool} directions, expected f={f}")
        if t > pool:
            raise ValueError(f"Cannot select t={t} directions out of f={pool}")
        stack_name = f"{k:03d}_{scene.name}"
        _, meta = render_stack(scene, out_dir / stack_name, seed=seed, t=t, draw=k, threads=threads)
        entries.append(
            {
                "stack": stack_name,
                "scene": scene.name,
                "material": meta["material"],
                "selected_indices": meta["selected_indices"],
            }
        )
    manifest = {"seed": int(seed), "t": int(t), "stacks": entries}
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2)
    logger.info(f"Wrote {len(entries)} stacks to {out_dir}")
    return out_dir


# ---------------------------------------------------------------------------
# Scene documents


def resolve_material(spec, base_dir=None):
    """A preset name or a material file path."""
    if isinstance(spec, str) and spec in MATERIAL_PRESETS:
        return make_material(spec)
    return io_utils.load_material(config.resolve_asset(spec, base_dir))


def resolve_rig(spec, base_dir=None):
    """'uniform', {'preset': 'uniform', ...} or a rig JSON path."""
    if spec is None or spec == "uniform":
        spec = {"preset": "uniform"}
    if isinstance(spec, dict):
        options = dict(spec)
        preset = options.pop("preset", "uniform")
        if preset != "uniform":
            raise ValueError(f"Unknown rig preset {preset!r}")
        count = options.pop("count", 39)
        max_polar_deg = options.pop("max_polar_deg", 60.0)
        return boxcar_rig(fibonacci_cap_directions(count, max_polar_deg), **options)
    return io_utils.read_rig(config.resolve_asset(spec, base_dir))


def resolve_shape(spec, base_dir=None):
    options = dict(spec or {"type": "sphere"})
    kind = options.pop("type", "sphere")
    if kind == "sphere":
        if "center" in options and options["center"] is not None:
            options["center"] = tuple(options["center"])
        return SphereShape(**options)
    if kind == "normal_map":
        return NormalMapShape(config.resolve_asset(options["path"], base_dir))
    raise ValueError(f"Unknown shape type {kind!r}")


def scene_from_dict(data, base_dir=None, rig=None):
    """Build a SceneSpec; rig overrides the document's own rig entry."""
    jitter = data.get("jitter_range", DEFAULT_JITTER_RANGE)
    return SceneSpec(
        shape=resolve_shape(data.get("shape"), base_dir),
        material=resolve_material(data["material"], base_dir),
        rig=rig if rig is not None else resolve_rig(data.get("rig"), base_dir),
        noise_sigma=float(data.get("noise_sigma", 0.0)),
        jitter_range=None if jitter is None else tuple(jitter),
        name=data.get("name", "scene"),
    )


def load_scene(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file {path} does not exist")
    with path.open("r") as fh:
        data = json.load(fh)
    if "material" not in data:
        raise ValueError(f"Scene {path} does not name a material")
    return scene_from_dict(data, base_dir=path.parent)
