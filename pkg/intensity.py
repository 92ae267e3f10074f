"""Equivalent light intensity estimation and per-band image normalization."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

import config
from render import EquivalentIntensities, equivalent_intensities, spectral_component_on_grid
from spectral_core import MultispectralImage, table_reflectance_matrix
from srd import decompose, reconstruct, reconstruction_error

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-8
DEFAULT_TRIM_FRACTION = 0.2
DEFAULT_SHADOW_THRESHOLD = 0.05
# Band level for the shadow threshold; a high percentile rather than the maximum, which a
# specular highlight can dominate.
BAND_LEVEL_PERCENTILE = 75
MIN_BANDS = 4
MIN_PIXELS = 4
DIVERGENCE_LIMIT = 3
RIDGE = 1e-12


class UnderConstrainedError(ValueError):
    """Raised when there are too few bands or too few lit observations to estimate intensities."""


class NonConvergenceError(RuntimeError):
    """Raised when the trimmed objective keeps increasing; estimate holds the last iterate."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class IntensityEstimate:
    values: EquivalentIntensities
    method: str
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if self.method not in ("oracle", "factorize"):
            raise ValueError(f"Unknown estimation method {self.method!r}")
        if not np.isfinite(self.residual) or self.residual < 0:
            raise ValueError("residual must be finite and >= 0")


def estimate_oracle(material, rig):
    """Ground-truth e' from the material's SRD spectral component."""
    R = table_reflectance_matrix(material)
    decomposition = decompose(R)
    r_s = spectral_component_on_grid(material, rig, decomposition)
    values = equivalent_intensities(rig, r_s)
    return IntensityEstimate(
        values=values,
        method="oracle",
        iterations=0,
        residual=reconstruction_error(R, reconstruct(decomposition)),
    )


def _fit_scaled_normals(observations, kept, directions, e_prime):
    """Per-pixel weighted normal equations for b (scaled normal) given intensities."""
    weights = kept * (e_prime[:, None] ** 2)
    A = np.einsum("jp,ja,jb->pab", weights, directions, directions)
    trace = np.trace(A, axis1=1, axis2=2)
    # pixels with nothing kept get b = 0
    A += (RIDGE * trace + (trace == 0))[:, None, None] * np.eye(3)
    rhs = np.einsum("jp,jp,ja->pa", kept * e_prime[:, None], observations, directions)
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def _residuals(observations, directions, e_prime, b):
    return observations - e_prime[:, None] * (directions @ b.T)


def _band_levels(observations):
    """Per-band BAND_LEVEL_PERCENTILE of the positive observations (0 for dark bands)."""
    levels = np.zeros(observations.shape[0])
    for j, row in enumerate(observations):
        lit = row[row > 0]
        if lit.size:
            levels[j] = np.percentile(lit, BAND_LEVEL_PERCENTILE)
    return levels


def _trimmed_keep(candidates, trim_fraction):
    """Per-band kept counts: each band drops floor(trim_fraction * its candidates)."""
    counts = candidates.sum(axis=1)
    return np.maximum(counts - np.floor(trim_fraction * counts).astype(int), 1)


def _select_kept(residuals, candidates, keep_counts):
    """Keep, per band, the keep_counts candidates with the smallest squared residual.

    A band can never lose more than its trim quota, so the fit cannot discard a band
    wholesale by shrinking or inflating its intensity.
    """
    squared = np.where(candidates, residuals**2, np.inf)
    order = np.argsort(squared, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(squared.shape[1])[None, :], axis=1)
    return candidates & (ranks < keep_counts[:, None])


def estimate_factorize(
    img,
    rig,
    max_iters=DEFAULT_MAX_ITERS,
    tol=DEFAULT_TOL,
    trim_fraction=DEFAULT_TRIM_FRACTION,
    shadow_threshold=DEFAULT_SHADOW_THRESHOLD,
):
    """Trimmed alternating least squares for Lambertian scaled normals and per-band intensities.

    Candidate observations are those above shadow_threshold times their band level (a high
    percentile of the band's lit values). Each outer iteration fits the intensities on the
    kept set (normals eliminated per pixel, log-intensities solved with
    scipy.optimize.least_squares, brightest band held fixed), then trims the
    floor(trim_fraction * candidates) largest residuals of every band. The result is scaled
    so that max e' = 1.
    """
    if img.bands != rig.count:
        raise ValueError(f"Image has {img.bands} bands but the rig has {rig.count} lights")
    if img.bands < MIN_BANDS:
        raise UnderConstrainedError(f"Intensity estimation needs >= {MIN_BANDS} bands, got {img.bands}")
    if not 0 <= trim_fraction < 1:
        raise ValueError("trim_fraction must be in [0, 1)")

    observations = img.observations()
    levels = _band_levels(observations)
    candidates = (observations > shadow_threshold * levels[:, None]) & (observations > 0)
    usable = candidates.sum(axis=0) >= 3
    if usable.sum() < MIN_PIXELS:
        raise UnderConstrainedError(
            f"Only {int(usable.sum())} pixels are lit in >= 3 bands (need {MIN_PIXELS})"
        )
    observations = observations[:, usable]
    candidates = candidates[:, usable]
    directions = rig.directions
    keep_counts = _trimmed_keep(candidates, trim_fraction)

    lit_sums = np.where(candidates, observations, 0.0).sum(axis=1)
    lit_counts = candidates.sum(axis=1)
    e_prime = np.where(lit_counts > 0, lit_sums / np.maximum(lit_counts, 1), 0.0)
    if np.any(e_prime <= 0):
        raise UnderConstrainedError("Some bands have no lit observations")
    reference = int(np.argmax(e_prime))
    free = np.arange(img.bands) != reference
    kept = candidates.copy()

    def unpack(x, anchor):
        values = np.empty(img.bands)
        values[reference] = anchor
        values[free] = np.exp(x)
        return values

    def objective(values, kept_set):
        b = _fit_scaled_normals(observations, kept_set, directions, values)
        residuals = _residuals(observations, directions, values, b)
        return float(np.sum(np.where(kept_set, residuals, 0.0) ** 2)), residuals

    debug = config.is_debug()
    floor = 1e-24 * float(np.sum(observations**2))
    anchor = e_prime[reference]
    previous, _ = objective(e_prime, kept)
    increases = 0
    iteration = 0
    current = previous
    for iteration in range(1, max_iters + 1):
        kept_set = kept

        def residual_vector(x, kept_set=kept_set):
            values = unpack(x, anchor)
            b = _fit_scaled_normals(observations, kept_set, directions, values)
            return np.where(kept_set, _residuals(observations, directions, values, b), 0.0).ravel()

        fit = least_squares(
            residual_vector, np.log(e_prime[free]), jac="3-point", xtol=1e-14, ftol=1e-14, gtol=1e-14
        )
        candidate_e = unpack(fit.x, anchor)
        fitted, residuals = objective(candidate_e, kept)
        if fitted <= current:
            e_prime = candidate_e
        else:
            fitted, residuals = objective(e_prime, kept)

        kept = _select_kept(residuals, candidates, keep_counts)
        current, _ = objective(e_prime, kept)
        if debug:
            assert current <= previous * (1 + 1e-9) + 1e-15, "trimmed objective increased"
        logger.debug(f"factorize iteration {iteration}: objective {current:.6e}")

        if current > previous:
            increases += 1
            if increases >= DIVERGENCE_LIMIT:
                estimate = IntensityEstimate(
                    EquivalentIntensities(e_prime / e_prime.max()), "factorize", iteration, current
                )
                raise NonConvergenceError(
                    f"Objective increased {DIVERGENCE_LIMIT} consecutive iterations", estimate
                )
        else:
            increases = 0
        if current <= floor or 0 <= previous - current <= tol * previous:
            previous = current
            break
        previous = current

    logger.info(f"Intensity estimation finished after {iteration} iterations (objective {previous:.3e})")
    return IntensityEstimate(
        values=EquivalentIntensities(e_prime / e_prime.max()),
        method="factorize",
        iterations=iteration,
        residual=max(previous, 0.0),
    )


def normalize(img, est):
    """I'_j = m_j / e'_j per band; the mask is unchanged."""
    if isinstance(est, IntensityEstimate):
        est = est.values
    values = est.values if isinstance(est, EquivalentIntensities) else np.asarray(est, dtype=float)
    if values.shape != (img.bands,):
        raise ValueError(f"Expected {img.bands} intensities, got {values.shape[0]}")
    if np.any(values <= 0):
        raise ValueError("Intensities must be positive")
    return MultispectralImage(img.data / values[:, None, None], img.mask)
