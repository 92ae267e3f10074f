import json
import logging
import re
from pathlib import Path

import numpy as np

from spectral_core import LightingRig, MultispectralImage, NormalMap, SpectralBrdfTable, WavelengthGrid

logger = logging.getLogger(__name__)

SBRDF_SUFFIX = ".sbrdf.json"
SBRDF_PAYLOAD_SUFFIX = ".sbrdf.bin"
BAND_FILE = "band_{index:03d}.pfm"
BAND_PATTERN = re.compile(r"band_(\d{3})\.pfm$")


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path, image):
    """Write a (H, W) or (H, W, 3) float image as little-endian PFM (rows bottom-to-top)."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        tag = "Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        tag = "PF"
    else:
        raise ValueError(f"PFM supports (H, W) or (H, W, 3) images, got shape {image.shape}")
    height, width = image.shape[:2]
    path = Path(path)
    with path.open("wb") as f:
        f.write(f"{tag}\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes())


def read_pfm(path):
    """Read a PFM file into a float64 array of shape (H, W) or (H, W, 3), top row first."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"PFM file {path} does not exist")
    with path.open("rb") as f:
        tag = f.readline().decode("ascii").strip()
        if tag == "PF":
            channels = 3
        elif tag == "Pf":
            channels = 1
        else:
            raise ValueError(f"{path} is not a PFM file (identifier {tag!r})")
        dims = f.readline().decode("ascii").split()
        if len(dims) != 2:
            raise ValueError(f"Could not parse PFM dimensions in {path}")
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().decode("ascii").strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    expected = width * height * channels
    if data.size != expected:
        raise ValueError(f"{path} holds {data.size} floats, expected {expected}")
    shape = (height, width) if channels == 1 else (height, width, 3)
    return np.flipud(data.reshape(shape)).astype(np.float64)


# ---------------------------------------------------------------------------
# Spectral BRDF tables


def write_material(table, path):
    """Write a table as <name>.sbrdf.json (header) plus <name>.sbrdf.bin (float32 payload)."""
    path = Path(path)
    if not path.name.endswith(SBRDF_SUFFIX):
        raise ValueError(f"Material files must end with {SBRDF_SUFFIX}: {path}")
    payload = path.with_name(path.name[: -len(SBRDF_SUFFIX)] + SBRDF_PAYLOAD_SUFFIX)
    header = {
        "name": table.name,
        "wavelengths": table.wavelengths.values.tolist(),
        "cosNL_axis": table.cos_nl_axis.tolist(),
        "cosNH_axis": table.cos_nh_axis.tolist(),
        "values_row_major": {"file": payload.name, "dtype": "<f4", "shape": list(table.shape)},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    payload.write_bytes(np.ascontiguousarray(table.values, dtype="<f4").tobytes())
    with path.open("w") as f:
        json.dump(header, f, indent=2)
    return path


def read_material(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Material file {path} does not exist")
    with path.open("r") as f:
        header = json.load(f)
    missing = {"name", "wavelengths", "cosNL_axis", "cosNH_axis", "values_row_major"} - header.keys()
    if missing:
        raise ValueError(f"Material header {path} is missing keys: {', '.join(sorted(missing))}")
    layout = header["values_row_major"]
    payload = path.parent / layout["file"]
    if not payload.exists():
        raise FileNotFoundError(f"Material payload {payload} does not exist")
    values = np.frombuffer(payload.read_bytes(), dtype=layout.get("dtype", "<f4"))
    shape = tuple(layout["shape"])
    if values.size != int(np.prod(shape)):
        raise ValueError(f"Payload {payload} holds {values.size} floats, expected shape {shape}")
    return SpectralBrdfTable(
        wavelengths=WavelengthGrid(header["wavelengths"]),
        cos_nl_axis=header["cosNL_axis"],
        cos_nh_axis=header["cosNH_axis"],
        values=values.reshape(shape).astype(np.float64),
        name=header["name"],
    )


# Converter hook: external measured formats plug in here by file suffix
MATERIAL_READERS = {SBRDF_SUFFIX: read_material}


def register_material_reader(suffix, reader):
    """Register reader(path) -> SpectralBrdfTable for files ending with suffix."""
    MATERIAL_READERS[suffix] = reader


def load_material(path):
    path = Path(path)
    for suffix, reader in sorted(MATERIAL_READERS.items(), key=lambda item: -len(item[0])):
        if path.name.endswith(suffix):
            logger.info(f"Loading material {path.name}")
            return reader(path)
    raise ValueError(f"No material reader registered for {path.name} (known: {', '.join(MATERIAL_READERS)})")


# ---------------------------------------------------------------------------
# Lighting rigs


def rig_to_dict(rig):
    return {
        "wavelengths": rig.wavelengths.values.tolist(),
        "directions": rig.directions.tolist(),
        "radiances": rig.radiances.tolist(),
        "bands": rig.bands.tolist(),
        "light_spectra": rig.light_spectra.tolist(),
        "camera_sensitivity": rig.camera_sensitivity.tolist(),
        "view": rig.view.tolist(),
    }


def rig_from_dict(data):
    missing = {"wavelengths", "directions", "radiances", "bands", "light_spectra", "camera_sensitivity"}
    missing -= data.keys()
    if missing:
        raise ValueError(f"Rig document is missing keys: {', '.join(sorted(missing))}")
    return LightingRig(
        wavelengths=WavelengthGrid(data["wavelengths"]),
        directions=data["directions"],
        radiances=data["radiances"],
        bands=data["bands"],
        light_spectra=data["light_spectra"],
        camera_sensitivity=data["camera_sensitivity"],
        view=data.get("view", (0.0, 0.0, 1.0)),
    )


def write_rig(rig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        json.dump(rig_to_dict(rig), f, indent=2)
    return path


def read_rig(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Rig file {path} does not exist")
    with path.open("r") as f:
        return rig_from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Normal and depth maps


def write_normals(normals, path):
    write_pfm(path, normals.vectors)


def read_normals(path):
    """Read a 3-channel normal PFM; all-zero pixels are null."""
    vectors = read_pfm(path)
    if vectors.ndim != 3:
        raise ValueError(f"{path} is not a 3-channel normal map")
    mask = np.linalg.norm(vectors, axis=-1) > 0.5
    # float32 storage loses a little precision; renormalize what was written as unit vectors
    vectors[mask] = vectors[mask] / np.linalg.norm(vectors[mask], axis=-1, keepdims=True)
    return NormalMap(vectors, mask)


def write_depth(depth, mask, path):
    write_pfm(path, np.where(mask, depth, np.nan))


def read_depth(path):
    """Read a depth PFM; returns (depth, mask) with mask marking finite pixels."""
    depth = read_pfm(path)
    mask = np.isfinite(depth)
    return np.where(mask, depth, 0.0), mask


def write_obj(depth, mask, path):
    """Height-field mesh: one vertex per in-mask pixel, two triangles per fully in-mask quad."""
    height, width = mask.shape
    index = np.full(mask.shape, -1, dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    rows, cols = np.nonzero(mask)
    lines = [f"v {c:d} {-r:d} {depth[r, c]:.6f}" for r, c in zip(rows, cols, strict=True)]
    quad = mask[:-1, :-1] & mask[:-1, 1:] & mask[1:, :-1] & mask[1:, 1:]
    for r, c in zip(*np.nonzero(quad), strict=True):
        a, b, d, e = index[r, c] + 1, index[r, c + 1] + 1, index[r + 1, c] + 1, index[r + 1, c + 1] + 1
        lines.append(f"f {a} {d} {b}")
        lines.append(f"f {b} {d} {e}")
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote mesh with {len(rows)} vertices to {path}")


# ---------------------------------------------------------------------------
# Multispectral stacks


def write_stack(stack_dir, image, normals_gt, meta):
    """Write band_XXX.pfm planes, mask.pfm, normals_gt.pfm and meta.json into stack_dir."""
    stack_dir = Path(stack_dir)
    stack_dir.mkdir(parents=True, exist_ok=True)
    for j in range(image.bands):
        write_pfm(stack_dir / BAND_FILE.format(index=j), image.data[j])
    write_pfm(stack_dir / "mask.pfm", image.mask.astype(np.float32))
    if normals_gt is not None:
        write_normals(normals_gt, stack_dir / "normals_gt.pfm")
    with (stack_dir / "meta.json").open("w") as f:
        json.dump(meta, f, indent=2)
    return stack_dir


def read_meta(stack_dir):
    meta_path = Path(stack_dir) / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"Stack metadata {meta_path} does not exist")
    with meta_path.open("r") as f:
        return json.load(f)


def read_stack(stack_dir):
    """Return (image, ground-truth normals or None, meta) for a stack directory."""
    stack_dir = Path(stack_dir)
    if not stack_dir.is_dir():
        raise FileNotFoundError(f"Stack directory {stack_dir} does not exist")
    band_files = sorted(p for p in stack_dir.iterdir() if BAND_PATTERN.search(p.name))
    if not band_files:
        raise ValueError(f"No band_XXX.pfm files in {stack_dir}")
    expected = [BAND_FILE.format(index=j) for j in range(len(band_files))]
    if [p.name for p in band_files] != expected:
        raise ValueError(f"Band files in {stack_dir} are not numbered contiguously from 000")
    mask = read_pfm(stack_dir / "mask.pfm") > 0.5
    data = np.stack([read_pfm(p) for p in band_files])
    image = MultispectralImage(np.where(mask, np.maximum(data, 0.0), 0.0), mask)
    normals_path = stack_dir / "normals_gt.pfm"
    normals = read_normals(normals_path) if normals_path.exists() else None
    return image, normals, read_meta(stack_dir)


def stack_rig(meta):
    """The (sub-)rig embedded in a stack's metadata."""
    if "rig" not in meta:
        raise ValueError("Stack metadata does not embed a rig")
    return rig_from_dict(meta["rig"])


# ---------------------------------------------------------------------------
# Intensity estimates


def write_estimate(path, values, method, iterations, residual):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        json.dump(
            {
                "values": [float(v) for v in values],
                "method": method,
                "iterations": int(iterations),
                "residual": float(residual),
            },
            f,
            indent=2,
        )
    return path


def read_estimate(path):
    """Read est.json (or a stack meta.json, whose e_prime_gt is used) into a dict with 'values'."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Estimate file {path} does not exist")
    with path.open("r") as f:
        data = json.load(f)
    if "values" not in data and "e_prime_gt" in data:
        data = {"values": data["e_prime_gt"], "method": "ground_truth", "iterations": 0, "residual": 0.0}
    if "values" not in data:
        raise ValueError(f"{path} holds neither 'values' nor 'e_prime_gt'")
    return data
