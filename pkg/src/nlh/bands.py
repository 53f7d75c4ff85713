"""Calibration of NLH curves: band-maximum and early-time exceedance."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .data import RiskPath
from .special import chi2_cdf, chi2_sf, norm_pdf

__all__ = ["max_band_exceedance", "early_exceedance_prob", "empirical_band_positions", "band_threshold"]


def max_band_exceedance(b1: float, b2: float, m: float) -> float:
    """Approximate ``P(max |W0(p)| / sqrt(p(1-p)) >= m)`` over ``p`` in ``[b1, b2]``.

    ``W0`` is a Brownian bridge; the tail approximation is

        4 phi(m)/m + phi(m) (m - 1/m) log(c2/c1),  c_i = b_i / (1 - b_i).
    """
    if not 0.0 < b1 < b2 < 1.0:
        raise ValueError("need 0 < b1 < b2 < 1")
    if m <= 0:
        raise ValueError("threshold must be positive")
    if m <= 1.0:
        warnings.warn("the approximation is poor for thresholds at or below 1", stacklevel=2)
    c1, c2 = b1 / (1.0 - b1), b2 / (1.0 - b2)
    dens = float(norm_pdf(m))
    return 4.0 * dens / m + dens * (m - 1.0 / m) * math.log(c2 / c1)


def band_threshold(b1: float, b2: float, level: float = 0.05) -> float:
    """Threshold ``m`` where :func:`max_band_exceedance` equals ``level``."""
    from scipy.optimize import brentq

    return brentq(lambda m: max_band_exceedance(b1, b2, m) - level, 1.0 + 1e-9, 20.0, xtol=1e-12)


def early_exceedance_prob(k: int, threshold: float = 1.96) -> float:
    """``P(|sqrt(k) (1 - V) / sqrt(V)| > threshold)`` with ``V ~ chi2_{2k} / 2k``.

    This is the exact law of a Type A curve at the ``k``-th event for a
    correctly specified constant hazard.  The event is ``V < w1^2`` or
    ``V > w2^2`` with ``w1, w2`` the roots of ``sqrt(k) w^2 +- c w - sqrt(k)``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    c = float(threshold)
    if c <= 0:
        return 1.0
    root = math.sqrt(c * c + 4.0 * k)
    w1 = (-c + root) / (2.0 * math.sqrt(k))
    w2 = (c + root) / (2.0 * math.sqrt(k))
    df = 2 * k
    return float(chi2_cdf(df * w1 * w1, df) + chi2_sf(df * w2 * w2, df))


def empirical_band_positions(path: RiskPath, b1: float, b2: float) -> tuple[float, float]:
    """Times where the exposure fraction ``int_0^t Y / int_0^tau Y`` reaches ``b1`` and ``b2``."""
    if not 0.0 <= b1 < b2 <= 1.0:
        raise ValueError("need 0 <= b1 < b2 <= 1")
    exposure = np.concatenate([[0.0], np.cumsum(path.gap_risk * np.diff(path.edges))])
    frac = exposure / exposure[-1]
    # first time each fraction is reached, skipping flat stretches
    keep = np.concatenate([[True], np.diff(frac) > 0])
    xs, ts = frac[keep], path.edges[keep]
    if xs.size and xs[0] == 0.0 and keep.sum() > 1:
        # start of exposure, not the origin, when entries are delayed
        first = np.flatnonzero(np.diff(frac) > 0)[0]
        ts = ts.copy()
        ts[0] = path.edges[first]
    a1, a2 = np.interp([b1, b2], xs, ts)
    return float(a1), float(a2)
