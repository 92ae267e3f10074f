"""Command-line entry point: mpskit <subcommand> [options]."""

import argparse
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

import config
import io_utils
import metrics
from integrate import integrate_fc
from intensity import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    DEFAULT_TRIM_FRACTION,
    NonConvergenceError,
    estimate_factorize,
    estimate_oracle,
    normalize,
)
from pipeline import ConfigError, StageError, load_config, run_pipeline
from render import load_scene, render_stack, rendered_rig, resolve_material
from solver import DEFAULT_HIGH_PCT, DEFAULT_LOW_PCT, solve_lambertian, solve_robust
from spectral_core import MATERIAL_PRESETS, make_material
from srd import DEFAULT_FILTER_THRESHOLD, filter_materials, material_report

logger = logging.getLogger("mpskit")

LOG_FORMAT = "%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]"
FLOAT_FORMAT = "%.10g"


def configure_logging(quiet=False):
    if config.is_debug():
        log_level = logging.DEBUG
    else:
        log_level = logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=log_level, force=True)

    log_dir = config.get_log_dir()
    if log_dir:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(Path(log_dir) / "mpskit.log", maxBytes=10240, backupCount=10)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        file_handler.setLevel(log_level)
        logging.getLogger().addHandler(file_handler)


def _material_inputs(entries):
    """Expand preset names, material files and directories of material files."""
    tables = []
    for entry in entries:
        path = Path(entry)
        if entry in MATERIAL_PRESETS:
            tables.append(make_material(entry))
        elif path.is_dir():
            files = sorted(path.glob(f"*{io_utils.SBRDF_SUFFIX}"))
            if not files:
                raise FileNotFoundError(f"No {io_utils.SBRDF_SUFFIX} files in {path}")
            tables.extend(io_utils.load_material(f) for f in files)
        else:
            tables.append(io_utils.load_material(config.resolve_asset(path)))
    return tables


def cmd_render(args):
    scene = load_scene(args.scene)
    out_dir, meta = render_stack(
        scene, args.out, seed=args.seed, t=args.bands, threads=args.threads, rig_source=str(args.scene)
    )
    logger.info(f"Rendered {len(meta['selected_indices'])} bands of {scene.name!r} into {out_dir}")


def cmd_decompose(args):
    tables = _material_inputs(args.materials)
    rows = [
        material_report(table, pairs=args.pairs, seed=args.seed, bands=args.bands, relative=args.relative)
        for table in tqdm(tables, desc="Decomposing", disable=args.quiet)
    ]
    frame = pd.DataFrame(rows, columns=["name", "t", "g", "E_r_svd", "E_r_lambertian", "energy_ratio"])
    logger.info(f"Mean E_r over {len(rows)} materials: {frame['E_r_svd'].mean():.6g}")
    retained = filter_materials(zip(frame["name"], frame["E_r_svd"], strict=True), args.threshold)
    logger.info(f"Retained {len(retained)} of {len(rows)} materials at threshold {args.threshold}")
    frame.to_csv(args.out if args.out else sys.stdout, index=False, float_format=FLOAT_FORMAT)


def cmd_estimate(args):
    image, _, meta = io_utils.read_stack(args.stack)
    rig = io_utils.stack_rig(meta)
    if args.method == "oracle":
        material = resolve_material(args.material or meta["material"], Path(args.stack))
        estimate = estimate_oracle(material, rendered_rig(meta))
    else:
        try:
            estimate = estimate_factorize(
                image, rig, max_iters=args.max_iters, tol=args.tol, trim_fraction=args.trim
            )
        except NonConvergenceError as e:
            logger.warning(f"{e!s}; writing the last iterate")
            estimate = e.estimate
    io_utils.write_estimate(
        args.out, estimate.values.values, estimate.method, estimate.iterations, estimate.residual
    )
    logger.info(f"Wrote {args.method} estimate to {args.out}")


def cmd_solve(args):
    image, _, meta = io_utils.read_stack(args.stack)
    rig = io_utils.stack_rig(meta)
    estimate = io_utils.read_estimate(args.est)
    normalized = normalize(image, estimate["values"])
    if args.method == "lambertian":
        report = solve_lambertian(normalized, rig, threads=args.threads)
    else:
        report = solve_robust(normalized, rig, low_pct=args.low, high_pct=args.high, threads=args.threads)
    io_utils.write_normals(report.normals, args.out)
    counts = ", ".join(f"{name}={count}" for name, count in report.reason_counts().items() if count)
    logger.info(f"Wrote normals to {args.out} ({counts})")


def cmd_integrate(args):
    normals = io_utils.read_normals(args.normals)
    depth = integrate_fc(normals)
    io_utils.write_depth(depth.values, depth.mask, args.out)
    if args.obj:
        io_utils.write_obj(depth.values, depth.mask, args.obj)
    logger.info(f"Wrote depth to {args.out}")


def cmd_eval(args):
    pred, gt = metrics.restrict_to_common(io_utils.read_normals(args.pred), io_utils.read_normals(args.gt))
    row = {"mae_deg": metrics.mean_angular_error(gt, pred), "cosine_loss": metrics.cosine_loss(gt, pred)}
    row["intensity_l2"] = np.nan
    if args.est and args.gt_est:
        s = io_utils.read_estimate(args.gt_est)["values"]
        s_hat = io_utils.read_estimate(args.est)["values"]
        row["intensity_l2"] = metrics.intensity_error(s, s_hat, normalize=True)
    pd.DataFrame([row]).to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)


def cmd_pipeline(args):
    cfg = load_config(args.config)
    run_pipeline(cfg, threads=args.threads, quiet=args.quiet)


def cmd_materials(args):
    out_dir = Path(args.out) if args.out else config.get_data_dir() / "materials"
    for name in args.names or sorted(MATERIAL_PRESETS):
        path = io_utils.write_material(make_material(name), out_dir / f"{name}{io_utils.SBRDF_SUFFIX}")
        logger.info(f"Wrote {path}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="mpskit", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[common], help="render a scene into a stack directory")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bands", type=int, default=None, help="number of directions t to select")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("decompose", parents=[common], help="SRD statistics per material")
    p.add_argument("materials", nargs="+", help="preset names, .sbrdf.json files or directories")
    p.add_argument("--pairs", type=int, default=None, help="sample this many sphere geometry pairs")
    p.add_argument("--bands", type=int, default=None, help="evenly spaced wavelength rows to keep")
    p.add_argument("--relative", action="store_true", help="report relative Frobenius errors")
    p.add_argument("--threshold", type=float, default=DEFAULT_FILTER_THRESHOLD)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("estimate", parents=[common], help="estimate equivalent intensities")
    p.add_argument("--stack", required=True)
    p.add_argument("--method", choices=["factorize", "oracle"], default="factorize")
    p.add_argument("--material", default=None, help="material for the oracle (default: the stack's)")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--trim", type=float, default=DEFAULT_TRIM_FRACTION)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("solve", parents=[common], help="solve normals from a stack and an estimate")
    p.add_argument("--stack", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--method", choices=["lambertian", "robust"], default="robust")
    p.add_argument("--low", type=float, default=DEFAULT_LOW_PCT)
    p.add_argument("--high", type=float, default=DEFAULT_HIGH_PCT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("integrate", parents=[common], help="integrate normals into depth")
    p.add_argument("--normals", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--obj", default=None, help="also write a height-field mesh")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("eval", parents=[common], help="compare normals (and intensities)")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--est", default=None)
    p.add_argument("--gt-est", default=None, help="est.json or the stack's meta.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common], help="run a configured experiment")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("materials", parents=[common], help="write preset material tables")
    p.add_argument("names", nargs="*", help=f"presets (default: all of {sorted(MATERIAL_PRESETS)})")
    p.add_argument("--out", default=None, help="directory (default: $MPSKIT_DATA_DIR/materials)")
    p.set_defaults(func=cmd_materials)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", 0)
    args.threads = getattr(args, "threads", None)
    args.quiet = getattr(args, "quiet", False)
    configure_logging(args.quiet)
    try:
        args.func(args)
    except ConfigError as e:
        print(f"Error: invalid config at {e.field}: {e!s}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"Error in stage {e.stage}: {e!s}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"Error: {e!s}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
