"""Batch experiments: render -> estimate -> normalize -> solve -> integrate -> evaluate."""

import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

import io_utils
import metrics
from integrate import MIN_NORMAL_Z, integrate_fc
from intensity import NonConvergenceError, estimate_factorize, estimate_oracle, normalize
from render import SceneSpec, render_stack, rendered_rig, resolve_material, resolve_rig, resolve_shape
from solver import solve_lambertian, solve_robust

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "scene",
    "material",
    "bands",
    "seed",
    "mae_deg",
    "mae_deg_ones",
    "cosine_loss",
    "intensity_l2",
    "coverage",
    "intensity_dynamic_range",
    "integration_dropped",
]
FLOAT_FORMAT = "%.10g"

ESTIMATORS = {"factorize": {"max_iters", "tol", "trim_fraction", "shadow_threshold"}, "oracle": set()}
SOLVERS = {"lambertian": {"shadow_threshold"}, "robust": {"low_pct", "high_pct", "shadow_threshold"}}
TOP_LEVEL_KEYS = {
    "output_dir",
    "seeds",
    "bands",
    "rig",
    "scenes",
    "estimator",
    "solver",
    "ablation",
    "integrate",
}
SCENE_KEYS = {"name", "shape", "material", "noise_sigma", "jitter_range"}


class ConfigError(ValueError):
    """Raised when a pipeline config violates the schema; field is a dotted path like scenes[0].material."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class StageError(RuntimeError):
    """Raised when a pipeline stage fails; stage names the stage."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    output_dir: Path
    seeds: list
    bands: list
    rig: object
    rig_source: object
    scenes: list
    estimator: str = "factorize"
    estimator_opts: dict = field(default_factory=dict)
    solver: str = "robust"
    solver_opts: dict = field(default_factory=dict)
    ablation: bool = False
    integrate: bool = True


@contextmanager
def stage(name):
    """Re-raise any failure inside the block as a StageError naming the stage."""
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, f"{type(e).__name__}: {e!s}") from e


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, int | float) and not isinstance(value, bool) and np.isfinite(value)


def _method_block(data, name, methods, default):
    block = data.get(name, {"method": default})
    if not isinstance(block, dict):
        raise ConfigError(name, "must be an object with 'method' and optional 'opts'")
    unknown = set(block) - {"method", "opts"}
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    method = block.get("method", default)
    if method not in methods:
        raise ConfigError(f"{name}.method", f"must be one of {sorted(methods)}, got {method!r}")
    opts = block.get("opts", {})
    if not isinstance(opts, dict):
        raise ConfigError(f"{name}.opts", "must be an object")
    for key, value in opts.items():
        if key not in methods[method]:
            raise ConfigError(f"{name}.opts.{key}", f"not an option of {method!r}")
        if not _is_number(value):
            raise ConfigError(f"{name}.opts.{key}", "must be a finite number")
        if key == "max_iters" and (not _is_int(value) or value < 1):
            raise ConfigError(f"{name}.opts.{key}", "must be a positive integer")
    return method, dict(opts)


def _scene(data, index, rig, base_dir):
    path = f"scenes[{index}]"
    if not isinstance(data, dict):
        raise ConfigError(path, "must be an object")
    unknown = set(data) - SCENE_KEYS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{path}.name", "must be a nonempty string")
    if not isinstance(data.get("material"), str):
        raise ConfigError(f"{path}.material", "must be a preset name or a material file path")
    noise = data.get("noise_sigma", 0.0)
    if not _is_number(noise) or noise < 0:
        raise ConfigError(f"{path}.noise_sigma", "must be a number >= 0")
    jitter = data.get("jitter_range", [0.1, 1.0])
    if jitter is not None:
        valid = isinstance(jitter, list) and len(jitter) == 2 and all(_is_number(v) for v in jitter)
        if not valid or not 0 < jitter[0] <= jitter[1] <= 1:
            raise ConfigError(f"{path}.jitter_range", "must be [lo, hi] with 0 < lo <= hi <= 1, or null")
    try:
        shape = resolve_shape(data.get("shape"), base_dir)
    except (ValueError, TypeError, KeyError, FileNotFoundError) as e:
        raise ConfigError(f"{path}.shape", str(e)) from e
    try:
        material = resolve_material(data["material"], base_dir)
    except (ValueError, FileNotFoundError) as e:
        raise ConfigError(f"{path}.material", str(e)) from e
    return SceneSpec(
        shape=shape,
        material=material,
        rig=rig,
        noise_sigma=float(noise),
        jitter_range=None if jitter is None else tuple(jitter),
        name=name,
    )


def validate_config(data, base_dir=None):
    """Check a config document and resolve its assets; raises ConfigError with the offending field."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if not isinstance(data.get("output_dir"), str) or not data["output_dir"]:
        raise ConfigError("output_dir", "must be a nonempty string")

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "must be a nonempty list of integers")
    for i, seed in enumerate(seeds):
        if not _is_int(seed) or seed < 0:
            raise ConfigError(f"seeds[{i}]", "must be an integer >= 0")

    rig_spec = data.get("rig", "uniform")
    try:
        rig = resolve_rig(rig_spec, base_dir)
    except (ValueError, TypeError, FileNotFoundError) as e:
        raise ConfigError("rig", str(e)) from e

    bands = data.get("bands", [rig.count])
    if not isinstance(bands, list) or not bands:
        raise ConfigError("bands", "must be a nonempty list of band counts")
    for i, t in enumerate(bands):
        if not _is_int(t) or not 1 <= t <= rig.count:
            raise ConfigError(f"bands[{i}]", f"must be an integer in [1, {rig.count}]")

    scenes = data.get("scenes")
    if not isinstance(scenes, list) or not scenes:
        raise ConfigError("scenes", "must be a nonempty list")
    resolved = [_scene(scene, i, rig, base_dir) for i, scene in enumerate(scenes)]
    names = [scene.name for scene in resolved]
    for i, name in enumerate(names):
        if names.index(name) != i:
            raise ConfigError(f"scenes[{i}].name", f"duplicate scene name {name!r}")

    estimator, estimator_opts = _method_block(data, "estimator", ESTIMATORS, "factorize")
    solver, solver_opts = _method_block(data, "solver", SOLVERS, "robust")
    for key in ("ablation", "integrate"):
        if key in data and not isinstance(data[key], bool):
            raise ConfigError(key, "must be true or false")

    output_dir = Path(data["output_dir"])
    if not output_dir.is_absolute() and base_dir is not None:
        output_dir = Path(base_dir) / output_dir
    return PipelineConfig(
        output_dir=output_dir,
        seeds=list(seeds),
        bands=list(bands),
        rig=rig,
        rig_source=rig_spec,
        scenes=resolved,
        estimator=estimator,
        estimator_opts=estimator_opts,
        solver=solver,
        solver_opts=solver_opts,
        ablation=data.get("ablation", False),
        integrate=data.get("integrate", True),
    )


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file {path} does not exist")
    try:
        with path.open("r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("<root>", f"invalid JSON: {e.msg} (line {e.lineno})") from e
    return validate_config(data, base_dir=path.parent)


def _solve(method, image, rig, opts, threads):
    if method == "lambertian":
        return solve_lambertian(image, rig, threads=threads, **opts)
    return solve_robust(image, rig, threads=threads, **opts)


def _mae(gt, report):
    gt_common, pred_common = metrics.restrict_to_common(gt, report.normals)
    if gt_common.pixel_count == 0:
        return np.nan, np.nan
    return metrics.mean_angular_error(gt_common, pred_common), metrics.cosine_loss(gt_common, pred_common)


def run_single(cfg, scene, bands, seed, threads=None):
    """Run every stage for one (scene, band count, seed) and return its report row."""
    run_dir = cfg.output_dir / f"{scene.name}_t{bands:02d}_s{seed}"
    stack_dir = run_dir / "stack"

    with stage("render"):
        render_stack(scene, stack_dir, seed=seed, t=bands, threads=threads, rig_source=cfg.rig_source)
        image, gt_normals, meta = io_utils.read_stack(stack_dir)
        rig = io_utils.stack_rig(meta)

    with stage("estimate"):
        if cfg.estimator == "oracle":
            estimate = estimate_oracle(scene.material, rendered_rig(meta))
        else:
            try:
                estimate = estimate_factorize(image, rig, **cfg.estimator_opts)
            except NonConvergenceError as e:
                logger.warning(f"{run_dir.name}: {e!s}; using the last iterate")
                estimate = e.estimate
        io_utils.write_estimate(
            run_dir / "est.json",
            estimate.values.values,
            estimate.method,
            estimate.iterations,
            estimate.residual,
        )

    with stage("solve"):
        report = _solve(cfg.solver, normalize(image, estimate), rig, cfg.solver_opts, threads)
        io_utils.write_normals(report.normals, run_dir / "normals.pfm")

    mae_ones = np.nan
    if cfg.ablation:
        with stage("ablation"):
            report_ones = _solve(cfg.solver, image, rig, cfg.solver_opts, threads)
            io_utils.write_normals(report_ones.normals, run_dir / "normals_ones.pfm")
            mae_ones, _ = _mae(gt_normals, report_ones)

    with stage("eval"):
        mae, cosine = _mae(gt_normals, report)
        coverage = report.normals.pixel_count / gt_normals.pixel_count
        intensity_l2 = metrics.intensity_error(meta["e_prime_gt"], estimate, normalize=True)
        dynamic_range = metrics.intensity_dynamic_range(meta["e_prime_gt"])

    dropped = 0
    if cfg.integrate:
        with stage("integrate"):
            normals = report.normals
            integrable = normals.mask & (normals.vectors[..., 2] >= MIN_NORMAL_Z)
            dropped = int(normals.pixel_count - integrable.sum())
            if integrable.any():
                depth = integrate_fc(normals.restrict(integrable))
                io_utils.write_depth(depth.values, depth.mask, run_dir / "depth.pfm")

    return {
        "scene": scene.name,
        "material": scene.material.name,
        "bands": bands,
        "seed": seed,
        "mae_deg": mae,
        "mae_deg_ones": mae_ones,
        "cosine_loss": cosine,
        "intensity_l2": intensity_l2,
        "coverage": coverage,
        "intensity_dynamic_range": dynamic_range,
        "integration_dropped": dropped,
    }


def run_pipeline(cfg, threads=None, quiet=False):
    """Run every (scene, band count, seed) combination; writes report.csv and summary.csv."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    runs = list(product(cfg.scenes, cfg.bands, cfg.seeds))
    rows = []
    for scene, bands, seed in tqdm(runs, desc="Pipeline runs", disable=quiet):
        logger.info(f"Running {scene.name} with {bands} bands, seed {seed}")
        rows.append(run_single(cfg, scene, bands, seed, threads))

    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    report.to_csv(cfg.output_dir / "report.csv", index=False, float_format=FLOAT_FORMAT)
    summary = metrics.summarize(rows)
    summary.to_csv(cfg.output_dir / "summary.csv", index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote report for {len(rows)} runs to {cfg.output_dir}")
    return report
