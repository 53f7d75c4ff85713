"""Special functions for the gamma hazard model and band calibration."""

from __future__ import annotations

import numpy as np
from scipy import special, stats

__all__ = [
    "inc_gamma",
    "inc_gamma_upper",
    "log_inc_gamma",
    "log_inc_gamma_upper",
    "digamma",
    "norm_pdf",
    "norm_cdf",
    "chi2_cdf",
    "chi2_sf",
]

digamma = special.digamma
norm_cdf = special.ndtr

_LAG_NODES, _LAG_WEIGHTS = np.polynomial.laguerre.laggauss(64)


def inc_gamma(x, alpha):
    """Regularized lower incomplete gamma ``F0(x, alpha)``."""
    return special.gammainc(alpha, x)


def inc_gamma_upper(x, alpha):
    """``1 - F0(x, alpha)`` without cancellation."""
    return special.gammaincc(alpha, x)


def _series_lower(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    # d/d(alpha) of gamma(alpha, x), divided by Gamma(alpha), from the
    # positive-term series gamma(a, x) = e^-x sum_k x^(a+k) / (a (a+1) ... (a+k)).
    out = np.zeros_like(x)
    pos = x > 0
    if not np.any(pos):
        return out
    xs, As = x[pos], a[pos]
    logx = np.log(xs)
    n_terms = int(np.ceil(xs.max() + 12.0 * np.sqrt(xs.max()) + 40.0))
    logT = As * logx - np.log(As) - xs - special.gammaln(As)
    harm = 1.0 / As
    total = np.exp(logT) * (logx - harm)
    for k in range(1, n_terms):
        logT = logT + logx - np.log(As + k)
        harm = harm + 1.0 / (As + k)
        total = total + np.exp(logT) * (logx - harm)
    out[pos] = total
    return out


def _laguerre_upper(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    # int_x^inf log(u) u^(a-1) e^-u du / Gamma(a) with u = x + v
    v = _LAG_NODES[None, :]
    xx, aa = x[:, None], a[:, None]
    g = np.log(xx + v) * np.exp((aa - 1.0) * np.log1p(v / xx))
    pref = np.exp(-x + (a - 1.0) * np.log(x) - special.gammaln(a))
    return pref * (g @ _LAG_WEIGHTS)


def _split(x, alpha):
    x, a = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(alpha, dtype=float))
    x, a = x.ravel().copy(), a.ravel().copy()
    if np.any(a <= 0):
        raise ValueError("alpha must be positive")
    tail = x >= np.maximum(a + 1.0, 5.0)
    return x, a, tail


def log_inc_gamma(x, alpha):
    """``F0*(x, alpha) = int_0^x log(u) u^(alpha-1) e^(-u) du / Gamma(alpha)``.

    A positive-term series is used in the body of the distribution and
    64-point Gauss-Laguerre on the complement (the full integral is
    ``digamma(alpha)``) in the upper tail.
    """
    shape = np.broadcast(np.asarray(x), np.asarray(alpha)).shape
    xs, a, tail = _split(x, alpha)
    out = np.empty_like(xs)
    out[~tail] = _series_lower(xs[~tail], a[~tail])
    if np.any(tail):
        out[tail] = special.digamma(a[tail]) - _laguerre_upper(xs[tail], a[tail])
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def log_inc_gamma_upper(x, alpha):
    """``int_x^inf log(u) u^(alpha-1) e^(-u) du / Gamma(alpha)``."""
    shape = np.broadcast(np.asarray(x), np.asarray(alpha)).shape
    xs, a, tail = _split(x, alpha)
    out = np.empty_like(xs)
    out[~tail] = special.digamma(a[~tail]) - _series_lower(xs[~tail], a[~tail])
    if np.any(tail):
        out[tail] = _laguerre_upper(xs[tail], a[tail])
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / np.sqrt(2.0 * np.pi)


def chi2_cdf(x, df):
    return stats.chi2.cdf(x, df)


def chi2_sf(x, df):
    return stats.chi2.sf(x, df)
