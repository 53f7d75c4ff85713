"""Normalised local hazard curves.

A curve compares the Nelson-Aalen type increments of the data with those
implied by a fitted hazard model, through the weighted difference

    D_n(t) = n^{1/2} int_0^t K_n(s) {dH_hat(s) - h(s, theta_hat) ds},

normalised by an estimate of its standard deviation ``kappa(t)`` that
accounts for the estimation of ``theta``.  Plot types differ in ``K_n``:

* ``A``: ``K_n = 1`` (cumulative hazard comparison),
* ``B``: ``K_n = Y/n`` (observed minus expected number of events),
* ``C``: ``K_n = (Y/n) G_n`` for a weight function ``G_n``.

Curves are evaluated at the distinct event times; the value just before
each event (the left limit) is kept as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import xlogy

from .data import SurvivalSample, build_risk_path
from .fitting import FitResult, fit_ml, quad_form_inverse
from .models import ConstantBaseline, FixedModel, HazardModel, ProportionalModel

__all__ = [
    "NlhCurve",
    "GWeight",
    "LogMinusPhiHat",
    "OneMinusThetaS",
    "DeterministicWeight",
    "TabulatedWeight",
    "OptimalAgainst",
    "nlh_curve",
    "curve_type_a",
    "curve_type_b",
    "curve_type_c",
    "curve_fixed",
    "curve_windowed",
    "KAPPA_FLOOR",
]

# NLH is left undefined where kappa < KAPPA_FLOOR * sqrt(leading variance term)
KAPPA_FLOOR = 1e-6
BAND_LEVEL = 1.96


# ---------------------------------------------------------------------------
# Curve container


@dataclass(frozen=True, eq=False)
class NlhCurve:
    """An NLH curve evaluated at the distinct event times.

    ``nlh`` is NaN where ``defined`` is False.  ``kappa2`` holds the raw
    variance estimate before flooring at zero.  The ``*_left`` arrays give
    the left limits at each event time.
    """

    times: np.ndarray
    d_n: np.ndarray
    kappa: np.ndarray
    nlh: np.ndarray
    defined: np.ndarray
    kappa2: np.ndarray
    d_left: np.ndarray
    kappa_left: np.ndarray
    nlh_left: np.ndarray
    plot: str
    flavor: str
    model: str
    theta: tuple[float, ...]
    n: int
    window: tuple[float, float] | None = None
    band_level: float = BAND_LEVEL
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.size

    def at(self, t) -> np.ndarray:
        """Linear interpolation between defined event-time values."""
        ok = self.defined
        return np.interp(t, self.times[ok], self.nlh[ok], left=np.nan, right=np.nan)

    def max_abs(self, lo: float = -np.inf, hi: float = np.inf, include_left: bool = True) -> float:
        """``max |NLH|`` over event times in ``[lo, hi]``.

        With ``include_left`` the left limits at those event times count too,
        which captures the extremes of the right-continuous path.
        """
        sel = (self.times >= lo) & (self.times <= hi)
        vals = [self.nlh[sel]]
        if include_left:
            vals.append(self.nlh_left[sel])
        stacked = np.concatenate(vals)
        stacked = stacked[np.isfinite(stacked)]
        return float(np.max(np.abs(stacked))) if stacked.size else float("nan")

    def metadata(self) -> dict:
        out = {
            "model": self.model,
            "theta": list(self.theta),
            "plot": self.plot,
            "flavor": self.flavor,
            "n": self.n,
            "band_level": self.band_level,
            "window": list(self.window) if self.window else None,
        }
        out.update(self.extra)
        return out

    def rows(self):
        for t, d, k, v, ok in zip(self.times, self.d_n, self.kappa, self.nlh, self.defined):
            yield float(t), float(d), float(k), (float(v) if ok else float("nan")), bool(ok)


# ---------------------------------------------------------------------------
# Type C weights


class GWeight:
    """Weight ``G_n(s)`` for Type C plots.

    ``values`` evaluates ``G`` at given times.  ``primitives`` returns the
    antiderivatives from 0 of ``G h``, ``G^2 h`` and ``G psi h`` (shapes
    ``(m,)``, ``(m,)``, ``(m, p)``) or None when no exact form is known for
    the model, in which case the parametric variance is unavailable.
    """

    label = "G"

    def bind(self, model: HazardModel, theta: np.ndarray, sample: SurvivalSample, fit: FitResult, flavor: str):
        return self

    def values(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def primitives(self, s: np.ndarray, model: HazardModel, theta: np.ndarray):
        return None


def _is_exponential(model: HazardModel) -> bool:
    return isinstance(model, ProportionalModel) and isinstance(model.baseline, ConstantBaseline)


class LogMinusPhiHat(GWeight):
    """``G(s) = log s - phi_hat`` with ``phi_hat = int Y log s ds / int Y ds``.

    Tailored against Weibull-type departures from a constant hazard.  Exact
    antiderivatives are available for the exponential model.
    """

    label = "log"

    def __init__(self, phi: float | None = None):
        self.phi = phi

    def bind(self, model, theta, sample, fit, flavor):
        if self.phi is not None:
            return self
        return LogMinusPhiHat(phi_hat(sample))

    def values(self, s):
        return np.log(s) - self.phi

    def primitives(self, s, model, theta):
        if not _is_exponential(model):
            return None
        th, phi = theta[0], self.phi
        slog = xlogy(s, s)
        slog2 = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) ** 2, 0.0)
        int_g = slog - s - phi * s
        int_g2 = slog2 - 2.0 * slog + 2.0 * s - 2.0 * phi * (slog - s) + phi * phi * s
        return th * int_g, th * int_g2, int_g[:, None]


def phi_hat(sample: SurvivalSample) -> float:
    """``int Y(s) log s ds / int Y(s) ds`` computed subject by subject."""

    def prim(x):
        return xlogy(x, x) - x

    num = np.sum(prim(sample.time) - prim(sample.entry))
    return float(num / np.sum(sample.time - sample.entry))


class OneMinusThetaS(GWeight):
    """``G(s) = 1 - theta_hat s``, tailored against frailty departures."""

    label = "frailty"

    def __init__(self, rate: float | None = None):
        self.rate = rate

    def bind(self, model, theta, sample, fit, flavor):
        if self.rate is not None:
            return self
        return OneMinusThetaS(float(theta[0]))

    def values(self, s):
        return 1.0 - self.rate * s

    def primitives(self, s, model, theta):
        if not _is_exponential(model):
            return None
        th, r = theta[0], self.rate
        int_g = s - 0.5 * r * s * s
        int_g2 = s - r * s * s + r * r * s**3 / 3.0
        return th * int_g, th * int_g2, int_g[:, None]


class DeterministicWeight(GWeight):
    """User-supplied ``G``; pass ``primitives(s, model, theta)`` for exact integrals."""

    label = "deterministic"

    def __init__(self, g: Callable, primitives: Callable | None = None):
        self.g = g
        self._prim = primitives

    def values(self, s):
        return np.broadcast_to(np.asarray(self.g(s), dtype=float), np.shape(s)).copy()

    def primitives(self, s, model, theta):
        return None if self._prim is None else self._prim(s, model, theta)


class TabulatedWeight(GWeight):
    """Piecewise-constant ``G`` with value ``values[i]`` on ``(knots[i], knots[i+1]]``.

    The last value extends to infinity.  Integrals against any model are exact
    because each piece only needs ``H`` and ``H*``.
    """

    label = "table"

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.vals = np.asarray(values, dtype=float)
        if self.knots.shape != self.vals.shape or self.knots.size == 0:
            raise ValueError("weight table needs matching knots and values")
        if self.knots[0] != 0.0 or np.any(np.diff(self.knots) <= 0):
            raise ValueError("weight knots must start at 0 and increase")

    def values(self, s):
        idx = np.clip(np.searchsorted(self.knots, s, side="left") - 1, 0, self.vals.size - 1)
        return self.vals[idx]

    def primitives(self, s, model, theta):
        lo = self.knots
        hi = np.concatenate([self.knots[1:], [np.inf]])
        H_lo = model._cum_hazard(lo, theta)
        Hs_lo = model._cum_score(lo, theta)
        f1 = np.zeros(s.size)
        f2 = np.zeros(s.size)
        f3 = np.zeros((s.size, model.p))
        for i, g in enumerate(self.vals):
            x = np.clip(s, lo[i], hi[i])
            dH = model._cum_hazard(x, theta) - H_lo[i]
            f1 += g * dH
            f2 += g * g * dH
            f3 += g * (model._cum_score(x, theta) - Hs_lo[i])
        return f1, f2, f3


class OptimalAgainst(GWeight):
    """Weight with optimal local power against ``h(s, theta, gamma)``.

    ``phi(s, theta)`` is the log-hazard derivative in the extension
    parameter ``gamma`` at the null value.  The weight is
    ``G(s) = phi(s) - psi(s)^T Sigma^{-1} m`` with
    ``m = n^{-1} int Y phi psi h ds`` in the parametric flavor and
    ``m = n^{-1} sum phi psi dN`` in the nonparametric one.
    """

    label = "optimal"

    def __init__(self, phi: Callable, model=None, theta=None, shift=None):
        self.phi = phi
        self._model, self._theta, self.shift = model, theta, shift

    def bind(self, model, theta, sample, fit, flavor):
        path = build_risk_path(sample)
        if model.p == 0:
            return OptimalAgainst(self.phi, model, theta, np.zeros(0))
        if flavor == "pm":

            def f(s):
                return (
                    np.asarray(self.phi(s, theta))[:, None]
                    * model._score(s, theta)
                    * model._hazard(s, theta)[:, None]
                )

            m = (path.gap_risk[:, None] * gap_quad(f, path.edges[:-1], path.edges[1:], model.p)).sum(0) / fit.n
        else:
            u = path.event_times
            m = (np.asarray(self.phi(u, theta)) * path.events) @ model._score(u, theta) / fit.n
        shift = np.linalg.solve(fit.sigma(flavor), m)
        return OptimalAgainst(self.phi, model, theta, shift)

    def values(self, s):
        base = np.asarray(self.phi(s, self._theta), dtype=float)
        if self.shift.size == 0:
            return base
        return base - self._model._score(s, self._theta) @ self.shift


def gap_quad(f: Callable, lo: np.ndarray, hi: np.ndarray, width: int | None = None) -> np.ndarray:
    """``int_lo^hi f(s) ds`` for many intervals with one shared adaptive rule.

    ``f`` maps an array of times to values of shape ``(m,)`` or ``(m, k)``.
    """
    lo = np.asarray(lo, dtype=float)
    span = np.asarray(hi, dtype=float) - lo
    live = span > 0
    shape = (lo.size,) if width is None else (lo.size, width)
    out = np.zeros(shape)
    if not np.any(live):
        return out
    a, w = lo[live], span[live]

    def integrand(u):
        val = np.asarray(f(a + u * w), dtype=float)
        val = val * (w if val.ndim == 1 else w[:, None])
        return np.nan_to_num(val, nan=0.0, posinf=0.0, neginf=0.0)

    out[live] = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=2000)[0]
    return out


# ---------------------------------------------------------------------------
# Core computation


def _resolve_flavor(model: HazardModel, flavor: str | None) -> str:
    flavor = flavor or model.default_flavor
    if flavor not in ("pm", "np"):
        raise ValueError(f"unknown variance flavor {flavor!r}")
    return flavor


def nlh_curve(
    fit: FitResult,
    plot: str = "A",
    flavor: str | None = None,
    weight: GWeight | None = None,
    at=None,
) -> NlhCurve:
    """NLH curve of the given type for a fitted model.

    The fit carries the data (restricted to the window for window fits) and
    the normalizing ``n``.

    Parameters
    ----------
    plot : {"A", "B", "C"}
    flavor : {"pm", "np"}, optional
        Parametric plug-in or nonparametric variance; defaults to the
        model's preference.
    weight : GWeight, optional
        Required for Type C.
    at : array_like, optional
        Extra evaluation times merged with the event times.
    """
    plot = plot.upper()
    if plot not in ("A", "B", "C"):
        raise ValueError(f"unknown plot type {plot!r}")
    if plot == "C" and weight is None:
        raise ValueError("Type C plots need a weight function")
    model, theta, sample, n = fit.model, fit.theta, fit.sample, fit.n
    flavor = _resolve_flavor(model, flavor)
    path = build_risk_path(sample)
    edges, Y = path.edges, path.gap_risk
    u, dN, Yu = path.event_times, path.events.astype(float), path.at_risk
    if at is not None:
        # extra evaluation times become edges; Y is unchanged on the split gaps
        extra_t = np.unique(np.asarray(at, dtype=float))
        if np.any(extra_t <= 0):
            raise ValueError("evaluation times must be positive")
        edges = np.union1d(edges, extra_t)
        Y = path.risk_at(edges[1:])
        grid = np.union1d(u, extra_t)
        is_event = np.isin(grid, u)
        dN_grid = np.zeros(grid.size)
        dN_grid[is_event] = dN
        u, dN, Yu = grid, dN_grid, path.risk_at(grid)
    k_ev = np.searchsorted(edges, u)  # evaluation time u sits at edges[k_ev]
    safe_Yu = np.where(Yu > 0, Yu, 1.0)
    sqn = math.sqrt(n)
    p = model.p

    H_e = model._cum_hazard(edges, theta)
    dH = np.diff(H_e)
    extra: dict = {}

    if plot == "C":
        weight = weight.bind(model, theta, sample, fit, flavor)
        extra["weight"] = weight.label
        prims = weight.primitives(edges, model, theta)
        if prims is None:
            if flavor == "pm":
                warnings.warn(
                    "no exact integrals for this weight and model; using the nonparametric variance",
                    stacklevel=2,
                )
                flavor = "np"

            def gh(s):
                return weight.values(s) * model._hazard(s, theta)

            dGh = gap_quad(gh, edges[:-1], edges[1:])
        else:
            F1, F2, F3 = prims
            dGh, dG2h, dGpsih = np.diff(F1), np.diff(F2), np.diff(F3, axis=0)
        G_u = weight.values(u)

    def cum_at_events(gap_values):
        c = np.concatenate([np.zeros((1,) + gap_values.shape[1:]), np.cumsum(gap_values, axis=0)])
        return c[k_ev]

    # --- D_n at event times and the jump at each event
    if plot == "A":
        J = (Y > 0).astype(float)
        na = np.cumsum(dN / safe_Yu)
        d_n = sqn * (na - cum_at_events(J * dH))
        jump = sqn * dN / safe_Yu
    elif plot == "B":
        d_n = (np.cumsum(dN) - cum_at_events(Y * dH)) / sqn
        jump = dN / sqn
    else:
        d_n = (np.cumsum(G_u * dN) - cum_at_events(Y * dGh)) / sqn
        jump = G_u * dN / sqn

    # --- variance pieces: leading term and correction vector, plus jumps
    if flavor == "pm":
        sigma = fit.sigma_pm
        if plot == "A":
            lead = cum_at_events(np.where(Y > 0, n / np.where(Y > 0, Y, 1.0), 0.0) * dH)
            C = cum_at_events(J[:, None] * np.diff(model._cum_score(edges, theta), axis=0))
        elif plot == "B":
            lead = cum_at_events(Y * dH) / n
            C = cum_at_events(Y[:, None] * np.diff(model._cum_score(edges, theta), axis=0)) / n
        else:
            lead = cum_at_events(Y * dG2h) / n
            C = cum_at_events(Y[:, None] * dGpsih) / n
        lead_left, C_left = lead, C
    else:
        sigma = fit.sigma_np
        psi = np.zeros((u.size, p))
        if p:
            hit = dN > 0
            psi[hit] = model._score(u[hit], theta)
        if plot == "A":
            lead_inc = n * dN / safe_Yu**2
            C_inc = psi * (dN / safe_Yu)[:, None]
        elif plot == "B":
            lead_inc = dN / n
            C_inc = psi * (dN / n)[:, None]
        else:
            lead_inc = G_u**2 * dN / n
            C_inc = psi * (G_u * dN / n)[:, None]
        lead, C = np.cumsum(lead_inc), np.cumsum(C_inc, axis=0)
        lead_left, C_left = lead - lead_inc, C - C_inc

    scale = model.free_scale(theta) if p else None
    kappa2 = lead - quad_form_inverse(sigma, C, scale)
    kappa2_left = lead_left - quad_form_inverse(sigma, C_left, scale)
    kappa, ok = _floor(kappa2, lead)
    kappa_l, ok_l = _floor(kappa2_left, lead_left)
    d_left = d_n - jump
    with np.errstate(divide="ignore", invalid="ignore"):
        nlh = np.where(ok, d_n / kappa, np.nan)
        nlh_left = np.where(ok_l, d_left / kappa_l, np.nan)
    return NlhCurve(
        times=u,
        d_n=d_n,
        kappa=kappa,
        nlh=nlh,
        defined=ok,
        kappa2=kappa2,
        d_left=d_left,
        kappa_left=kappa_l,
        nlh_left=nlh_left,
        plot=plot,
        flavor=flavor,
        model=model.describe(),
        theta=tuple(map(float, theta)),
        n=n,
        window=fit.window,
        extra=extra,
    )


def _floor(kappa2: np.ndarray, lead: np.ndarray):
    kappa = np.sqrt(np.maximum(kappa2, 0.0))
    ok = (lead > 0) & (kappa > KAPPA_FLOOR * np.sqrt(np.maximum(lead, 0.0)))
    return kappa, ok


# ---------------------------------------------------------------------------
# Convenience wrappers


def curve_type_a(fit: FitResult, flavor: str | None = None) -> NlhCurve:
    return nlh_curve(fit, "A", flavor)


def curve_type_b(fit: FitResult, flavor: str | None = None) -> NlhCurve:
    return nlh_curve(fit, "B", flavor)


def curve_type_c(fit: FitResult, weight: GWeight, flavor: str | None = None) -> NlhCurve:
    return nlh_curve(fit, "C", flavor, weight)


def curve_fixed(model: FixedModel, sample: SurvivalSample, plot: str = "A", weight: GWeight | None = None) -> NlhCurve:
    """Curve against a fully specified hazard; no estimation correction."""
    if model.p != 0:
        raise ValueError("curve_fixed needs a model without free parameters")
    return nlh_curve(fit_ml(model, sample), plot, "pm", weight)


def curve_windowed(
    model: HazardModel,
    sample: SurvivalSample,
    window: tuple[float, float],
    plot: str = "A",
    flavor: str | None = None,
    weight: GWeight | None = None,
) -> NlhCurve:
    """Fit on ``[a, b]`` only and draw the curve there, with integrals from ``a``."""
    from .fitting import fit_window

    return nlh_curve(fit_window(model, sample, window), plot, flavor, weight)
