"""Evaluation quantities for intensities and normal maps, plus experiment tabulation."""

import logging

import numpy as np
import pandas as pd

from intensity import IntensityEstimate
from render import EquivalentIntensities
from spectral_core import NormalMap

logger = logging.getLogger(__name__)

SUMMARY_KEYS = ["scene", "material", "bands"]


def _values(s):
    if isinstance(s, IntensityEstimate):
        s = s.values
    if isinstance(s, EquivalentIntensities):
        s = s.values
    return np.asarray(s, dtype=float).reshape(-1)


def intensity_error(s, s_hat, normalize=False):
    """Squared l2 distance of two intensity vectors; normalize=True applies the max = 1 gauge first."""
    a = _values(s)
    b = _values(s_hat)
    if a.shape != b.shape:
        raise ValueError(f"Intensity vectors differ in length: {a.size} vs {b.size}")
    if normalize:
        a = a / a.max()
        b = b / b.max()
    return float(np.sum((a - b) ** 2))


def _dots(n, n_hat):
    if n.mask.shape != n_hat.mask.shape:
        raise ValueError(f"Normal maps differ in size: {n.mask.shape} vs {n_hat.mask.shape}")
    if not np.array_equal(n.mask, n_hat.mask):
        raise ValueError("Normal maps must share the same mask (see restrict_to_common)")
    if n.pixel_count == 0:
        raise ValueError("Normal maps have an empty mask")
    # clamp absorbs rounding overshoot of unit dot products
    return np.clip(np.einsum("pi,pi->p", n.in_mask(), n_hat.in_mask()), -1.0, 1.0)


def cosine_loss(n, n_hat):
    """Mean over the mask of 1 - n . n_hat."""
    return float(np.mean(1.0 - _dots(n, n_hat)))


def mean_angular_error(n, n_hat):
    """Mean angle between the maps over the mask, in degrees."""
    return float(np.mean(np.degrees(np.arccos(_dots(n, n_hat)))))


def restrict_to_common(n, n_hat):
    """Both maps restricted to the pixels valid in each."""
    common = n.mask & n_hat.mask
    return NormalMap(n.vectors, common), NormalMap(n_hat.vectors, common)


def intensity_dynamic_range(s):
    """log10 of the max/min ratio of an intensity vector."""
    values = _values(s)
    return float(np.log10(values.max() / values.min()))


def summarize(rows):
    """Mean metrics per scene, material and band count."""
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    keys = [key for key in SUMMARY_KEYS if key in frame.columns]
    numeric = [
        column
        for column in frame.columns
        if column not in keys and column != "seed" and pd.api.types.is_numeric_dtype(frame[column])
    ]
    summary = frame.groupby(keys, sort=True)[numeric].mean().reset_index()
    summary.insert(len(keys), "runs", frame.groupby(keys, sort=True).size().to_numpy())
    logger.debug(f"Summarized {len(frame)} runs into {len(summary)} groups")
    return summary
