"""Per-pixel surface normal estimation from intensity-normalized observations."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

import config
from spectral_core import NormalMap

logger = logging.getLogger(__name__)

DEFAULT_LOW_PCT = 0.15
DEFAULT_HIGH_PCT = 0.15
DEFAULT_SHADOW_THRESHOLD = 0.0
CHUNK_SIZE = 4096
CONDITION_FLOOR = 1e-10


class RigError(ValueError):
    """Raised when the rig cannot determine normals at all (all directions coplanar)."""


class NullReason(IntEnum):
    OK = 0
    UNLIT = 1
    UNDER_DETERMINED = 2
    TRIMMED_OUT = 3
    BACKFACING = 4
    OUTSIDE_MASK = 5


@dataclass(frozen=True, eq=False)
class SolveReport:
    normals: NormalMap
    per_pixel_residual: np.ndarray
    bands_used: np.ndarray
    reasons: np.ndarray

    def reason_counts(self):
        """Pixel count per reason, in-mask pixels only."""
        inside = self.reasons != NullReason.OUTSIDE_MASK
        return {reason.name: int(np.sum(self.reasons[inside] == reason)) for reason in NullReason}


def _check_inputs(imgN, rig):
    if imgN.bands != rig.count:
        raise ValueError(f"Image has {imgN.bands} bands but the rig has {rig.count} lights")
    if imgN.bands < 3:
        raise ValueError(f"Normal estimation needs >= 3 bands, got {imgN.bands}")
    if np.linalg.matrix_rank(rig.directions) < 3:
        raise RigError("Light directions are coplanar; normals are undetermined")


def _solve_block(observations, used, directions):
    """Least squares L b = m over the used bands of each pixel in a block."""
    pixels = observations.shape[1]
    weights = used.astype(float)
    counts = used.sum(axis=0)
    normals = np.zeros((pixels, 3))
    residuals = np.zeros(pixels)
    reasons = np.full(pixels, NullReason.UNDER_DETERMINED, dtype=np.int8)

    A = np.einsum("jp,ja,jb->pab", weights, directions, directions)
    eigenvalues = np.linalg.eigvalsh(A)
    well_posed = eigenvalues[:, 0] > CONDITION_FLOOR * np.maximum(eigenvalues[:, -1], 1e-300)
    solvable = (counts >= 3) & well_posed
    if np.any(solvable):
        rhs = np.einsum("jp,jp,ja->pa", weights, observations, directions)
        b = np.linalg.solve(A[solvable], rhs[solvable][..., None])[..., 0]
        fit = directions @ b.T
        squared = weights[:, solvable] * (observations[:, solvable] - fit) ** 2
        residuals[solvable] = np.sqrt(squared.sum(axis=0))
        norms = np.linalg.norm(b, axis=1)
        facing = (norms > 0) & (b[:, 2] > 0)
        n = np.zeros_like(b)
        n[facing] = b[facing] / norms[facing, None]
        normals[solvable] = n
        block_reasons = np.where(facing, NullReason.OK, NullReason.BACKFACING)
        reasons[solvable] = block_reasons
    return normals, residuals, counts, reasons


def _run(imgN, rig, used, threads, classify):
    observations = imgN.observations()
    pixel_count = observations.shape[1]
    starts = range(0, pixel_count, CHUNK_SIZE)
    directions = rig.directions

    def work(start):
        stop = start + CHUNK_SIZE
        return _solve_block(observations[:, start:stop], used[:, start:stop], directions)

    with ThreadPoolExecutor(max_workers=config.get_thread_count(threads)) as executor:
        blocks = list(executor.map(work, starts))
    if not blocks:
        blocks = [_solve_block(observations, used, directions)]
    normals, residuals, counts, reasons = (np.concatenate(parts) for parts in zip(*blocks, strict=True))

    reasons = classify(reasons)

    shape = imgN.mask.shape
    reason_plane = np.full(shape, NullReason.OUTSIDE_MASK, dtype=np.int8)
    reason_plane[imgN.mask] = reasons
    ok = reason_plane == NullReason.OK

    vectors = np.zeros((*shape, 3))
    vectors[imgN.mask] = normals
    residual_plane = np.zeros(shape)
    residual_plane[imgN.mask] = residuals
    used_plane = np.zeros(shape, dtype=int)
    used_plane[imgN.mask] = counts
    report = SolveReport(NormalMap(vectors, ok), residual_plane, used_plane, reason_plane)
    logger.info(f"Solved {int(ok.sum())} of {int(imgN.mask.sum())} pixels")
    return report


def solve_lambertian(imgN, rig, shadow_threshold=DEFAULT_SHADOW_THRESHOLD, threads=None):
    """Least-squares normal per pixel over its lit bands (m > shadow_threshold)."""
    _check_inputs(imgN, rig)
    lit = imgN.observations() > shadow_threshold

    def classify(reasons):
        return np.where(lit.sum(axis=0) == 0, NullReason.UNLIT, reasons)

    return _run(imgN, rig, lit, threads, classify)


def trimmed_selection(observations, lit, low_pct, high_pct):
    """Drop the ceil(low_pct * k) lowest and ceil(high_pct * k) highest of each pixel's k lit values.

    Ties are ranked by band index. Returns (used mask, lit counts, kept counts).
    """
    bands = observations.shape[0]
    keyed = np.where(lit, observations, np.inf)
    order = np.argsort(keyed, axis=0, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(bands)[:, None], axis=0)
    k = lit.sum(axis=0)
    # tolerance keeps ceil(0.15 * 20) at 3 despite float rounding
    low = np.ceil(low_pct * k - 1e-9).astype(int)
    high = np.ceil(high_pct * k - 1e-9).astype(int)
    used = lit & (ranks >= low[None, :]) & (ranks < (k - high)[None, :])
    return used, k, np.maximum(k - low - high, 0)


def solve_robust(
    imgN,
    rig,
    low_pct=DEFAULT_LOW_PCT,
    high_pct=DEFAULT_HIGH_PCT,
    shadow_threshold=DEFAULT_SHADOW_THRESHOLD,
    threads=None,
):
    """Position thresholding: rank-trim each pixel's lit observations, then solve on the rest."""
    _check_inputs(imgN, rig)
    if not (0 <= low_pct < 1 and 0 <= high_pct < 1):
        raise ValueError("Trim percentages must be in [0, 1)")
    observations = imgN.observations()
    lit = observations > shadow_threshold
    used, lit_counts, kept_counts = trimmed_selection(observations, lit, low_pct, high_pct)

    def classify(reasons):
        reasons = np.where((lit_counts >= 3) & (kept_counts < 3), NullReason.TRIMMED_OUT, reasons)
        return np.where(lit_counts == 0, NullReason.UNLIT, reasons)

    return _run(imgN, rig, used, threads, classify)

