"""Parametric hazard families.

Every model exposes the hazard ``h(s, theta)``, the cumulative hazard
``H(t, theta)``, the log-hazard score ``psi = d log h / d theta`` and the
cumulative-hazard gradient ``H* = dH / d theta``, all vectorized over time.
Parameters are plain 1-d float arrays in the order given by ``model.names``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .special import digamma, inc_gamma_upper, log_inc_gamma_upper

__all__ = [
    "InadmissibleParameterError",
    "HazardModel",
    "Baseline",
    "ProportionalModel",
    "GammaModel",
    "CompoundPoissonFrailty",
    "FixedModel",
    "RestrictedModel",
    "exponential_model",
    "weibull_model",
    "gompertz_model",
    "simple_frailty_model",
    "onset_weibull_model",
    "gamma_model",
    "compound_poisson_frailty_model",
    "fixed_model",
    "tabulated_model",
    "proportional_model",
    "model_from_id",
    "MODEL_IDS",
]

Array = np.ndarray


class InadmissibleParameterError(ValueError):
    """Parameter vector outside the admissible region of a model."""


def _as_times(t) -> Array:
    return np.atleast_1d(np.asarray(t, dtype=float))


def _xlogx_pow(t: Array, power: float) -> Array:
    # t**power * log(t) with the t=0 limit set to 0 (power > 0)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] ** power * np.log(t[pos])
    return out


# ---------------------------------------------------------------------------
# Base capability


class HazardModel:
    """Abstract parametric hazard family.

    Subclasses set ``name``, ``names`` and ``bounds`` and implement
    ``_hazard``, ``_cum_hazard``, ``_score`` and ``_cum_score``.  The public
    methods validate the parameter vector first.

    Attributes
    ----------
    bounds : list of (lower, upper)
        Open admissible interval for each parameter.
    closed_form : bool
        Whether ``info_primitive`` is available, i.e. the parametric
        variance integrals have exact antiderivatives.
    default_flavor : {"pm", "np"}
        Variance flavor used by the curve engine unless overridden.
    """

    name: str = "model"
    names: tuple[str, ...] = ()
    bounds: list[tuple[float, float]] = []
    closed_form: bool = False
    default_flavor: str = "pm"

    @property
    def p(self) -> int:
        return len(self.names)

    # -- validation ---------------------------------------------------------
    def check(self, theta) -> Array:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.p,):
            raise InadmissibleParameterError(
                f"{self.name} expects {self.p} parameters, got {theta.size}"
            )
        for value, name, (lo, hi) in zip(theta, self.names, self.bounds):
            if not (np.isfinite(value) and lo < value < hi):
                raise InadmissibleParameterError(
                    f"{self.name}: {name}={value:g} outside ({lo:g}, {hi:g})"
                )
        return theta

    # -- public evaluators --------------------------------------------------
    def hazard(self, s, theta) -> Array:
        return self._hazard(_as_times(s), self.check(theta))

    def log_hazard(self, s, theta) -> Array:
        return self._log_hazard(_as_times(s), self.check(theta))

    def cum_hazard(self, t, theta) -> Array:
        return self._cum_hazard(_as_times(t), self.check(theta))

    def score(self, s, theta) -> Array:
        """``psi(s, theta)`` as an ``(len(s), p)`` array."""
        return self._score(_as_times(s), self.check(theta))

    def cum_score(self, t, theta) -> Array:
        """``H*(t, theta)`` as an ``(len(t), p)`` array."""
        return self._cum_score(_as_times(t), self.check(theta))

    def info_primitive(self, t, theta) -> Array:
        """``int_0^t psi psi^T h ds`` as ``(len(t), p, p)``; closed-form models only."""
        if not self.closed_form:
            raise NotImplementedError(f"{self.name} has no closed-form information integral")
        return self._info_primitive(_as_times(t), self.check(theta))

    def info_increments(self, lo, hi, theta) -> Array:
        """``int_lo^hi psi psi^T h ds`` for each pair, shape ``(k, p, p)``."""
        lo, hi = _as_times(lo), _as_times(hi)
        theta = self.check(theta)
        if self.closed_form:
            return self._info_primitive(hi, theta) - self._info_primitive(lo, theta)
        out = np.zeros((lo.size, self.p, self.p))
        live = hi > lo
        if self.p == 0 or not np.any(live):
            return out
        a, w = lo[live], hi[live] - lo[live]

        # one adaptive rule over u in [0, 1] shared by all intervals
        def integrand(u):
            s = a + u * w
            psi = self._score(s, theta)
            h = self._hazard(s, theta)
            with np.errstate(invalid="ignore"):
                val = psi[:, :, None] * psi[:, None, :] * (h * w)[:, None, None]
            return np.where((h > 0)[:, None, None], val, 0.0)

        out[live] = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=2000)[0]
        return out

    def inverse_cum_hazard(self, e, theta) -> Array:
        """Smallest ``t`` with ``H(t) = e``; ``inf`` when ``e`` exceeds ``H(inf)``."""
        return self._inverse_numeric(_as_times(e), self.check(theta))

    # -- optimization parametrization --------------------------------------
    def to_free(self, theta) -> Array:
        theta = self.check(theta)
        eta = np.empty_like(theta)
        for i, (lo, hi) in enumerate(self.bounds):
            if np.isfinite(lo) and np.isfinite(hi):
                u = (theta[i] - lo) / (hi - lo)
                eta[i] = math.log(u / (1.0 - u))
            elif np.isfinite(lo):
                eta[i] = math.log(theta[i] - lo)
            else:
                eta[i] = theta[i]
        return eta

    def from_free(self, eta) -> Array:
        eta = np.asarray(eta, dtype=float)
        theta = np.empty_like(eta)
        for i, (lo, hi) in enumerate(self.bounds):
            if np.isfinite(lo) and np.isfinite(hi):
                theta[i] = lo + (hi - lo) * special.expit(eta[i])
            elif np.isfinite(lo):
                theta[i] = lo + math.exp(eta[i])
            else:
                theta[i] = eta[i]
        return theta

    def free_scale(self, theta) -> Array:
        """``d theta / d eta`` at ``theta``, zero on a bound (no logarithms taken)."""
        theta = np.asarray(theta, dtype=float)
        out = np.ones_like(theta)
        for i, (lo, hi) in enumerate(self.bounds):
            if np.isfinite(lo) and np.isfinite(hi):
                out[i] = (theta[i] - lo) * (hi - theta[i]) / (hi - lo)
            elif np.isfinite(lo):
                out[i] = theta[i] - lo
        return out

    def free_jacobian(self, eta) -> Array:
        """Elementwise ``d theta / d eta``."""
        eta = np.asarray(eta, dtype=float)
        out = np.ones_like(eta)
        for i, (lo, hi) in enumerate(self.bounds):
            if np.isfinite(lo) and np.isfinite(hi):
                e = special.expit(eta[i])
                out[i] = (hi - lo) * e * (1.0 - e)
            elif np.isfinite(lo):
                out[i] = math.exp(eta[i])
        return out

    # -- hooks --------------------------------------------------------------
    def for_sample(self, sample) -> "HazardModel":
        """Model adapted to a sample (only frailty depends on the data)."""
        return self

    def initial(self, sample) -> Array:
        raise NotImplementedError

    def restrict(self, fixed: dict[str, float]) -> "HazardModel":
        return RestrictedModel(self, fixed) if fixed else self

    def describe(self) -> str:
        return self.name

    def _log_hazard(self, s, theta):
        with np.errstate(divide="ignore"):
            return np.log(self._hazard(s, theta))

    def _inverse_numeric(self, e: Array, theta: Array) -> Array:
        # safeguarded bisection on log t, vectorized
        out = np.full(e.shape, np.inf)
        out[e <= 0] = 0.0
        todo = np.flatnonzero(e > 0)
        if todo.size == 0:
            return out
        target = e[todo]
        lo = np.full(todo.size, 1e-12)
        hi = np.ones(todo.size)
        for _ in range(200):
            grow = self._cum_hazard(hi, theta) < target
            if not grow.any():
                break
            hi[grow] *= 2.0
        finite = self._cum_hazard(hi, theta) >= target
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            below = self._cum_hazard(mid, theta) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi / lo - 1.0 < 1e-14):
                break
        out[todo[finite]] = hi[finite]
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()!r})"


# ---------------------------------------------------------------------------
# Proportional class theta * h0(s, beta)


class Baseline:
    """Shape family ``h0(s, beta)`` of the proportional class.

    ``info0`` returns ``int_0^t psi0 psi0^T h0 ds``; with the factor theta
    pulled out of ``h`` the full information blocks follow from ``H0``,
    ``H0*`` and ``info0``.
    """

    names: tuple[str, ...] = ()
    bounds: list[tuple[float, float]] = []

    def h0(self, s, beta):
        raise NotImplementedError

    def H0(self, t, beta):
        raise NotImplementedError

    def psi0(self, s, beta):
        return np.zeros((s.size, 0))

    def H0star(self, t, beta):
        return np.zeros((t.size, 0))

    def info0(self, t, beta):
        return np.zeros((t.size, 0, 0))

    def H0_inverse(self, v, beta):
        return None

    def log_h0(self, s, beta):
        with np.errstate(divide="ignore"):
            return np.log(self.h0(s, beta))


class ConstantBaseline(Baseline):
    def h0(self, s, beta):
        return np.ones_like(s)

    def H0(self, t, beta):
        return t.copy()

    def H0_inverse(self, v, beta):
        return v.copy()


class WeibullShape(Baseline):
    names = ("beta",)
    bounds = [(0.0, np.inf)]

    def h0(self, s, beta):
        b = beta[0]
        return b * s ** (b - 1.0)

    def log_h0(self, s, beta):
        b = beta[0]
        with np.errstate(divide="ignore"):
            return math.log(b) + (b - 1.0) * np.log(s)

    def H0(self, t, beta):
        return t ** beta[0]

    def psi0(self, s, beta):
        return (1.0 / beta[0] + np.log(s))[:, None]

    def H0star(self, t, beta):
        return _xlogx_pow(t, beta[0])[:, None]

    def info0(self, t, beta):
        b = beta[0]
        out = np.zeros_like(t)
        pos = t > 0
        tb = t[pos] ** b
        out[pos] = tb * (1.0 + (b * np.log(t[pos])) ** 2) / b**2
        return out[:, None, None]

    def H0_inverse(self, v, beta):
        return v ** (1.0 / beta[0])


def _exp_moments(t: Array, beta: float, orders: int = 3) -> Array:
    """``M_m(t) = int_0^t s^m e^(beta s) ds`` for ``m < orders``, shape (orders, len(t))."""
    x = beta * t
    out = np.empty((orders, t.size))
    small = np.abs(x) < 1.0
    if np.any(small):
        ts, xs = t[small], x[small]
        for m in range(orders):
            total = np.zeros_like(xs)
            term = np.ones_like(xs)
            for k in range(30):
                if k:
                    term = term * xs / k
                total += term / (k + m + 1)
            out[m, small] = ts ** (m + 1) * total
    big = ~small
    if np.any(big):
        xb = x[big]
        ex = np.exp(xb)
        out[0, big] = np.expm1(xb) / beta
        if orders > 1:
            out[1, big] = ((xb - 1.0) * ex + 1.0) / beta**2
        if orders > 2:
            out[2, big] = ((xb * xb - 2.0 * xb + 2.0) * ex - 2.0) / beta**3
    return out


class GompertzShape(Baseline):
    names = ("beta",)
    bounds = [(-np.inf, np.inf)]

    def h0(self, s, beta):
        return np.exp(beta[0] * s)

    def log_h0(self, s, beta):
        return beta[0] * s

    def H0(self, t, beta):
        return _exp_moments(t, beta[0], 1)[0]

    def psi0(self, s, beta):
        return s[:, None].copy()

    def H0star(self, t, beta):
        return _exp_moments(t, beta[0], 2)[1][:, None]

    def info0(self, t, beta):
        return _exp_moments(t, beta[0], 3)[2][:, None, None]

    def H0_inverse(self, v, beta):
        b = beta[0]
        if b == 0.0:
            return v.copy()
        arg = b * v
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.log1p(arg) / b
        return np.where(arg > -1.0, out, np.inf)


def _frailty_moments(t: Array, beta: float) -> Array:
    """``J(m, m+1) = int_0^t s^m (1 + beta s)^-(m+1) ds`` for m = 0, 1, 2."""
    x = beta * t
    out = np.empty((3, t.size))
    small = np.abs(x) < 0.5
    if np.any(small):
        ts, xs = t[small], x[small]
        for m in range(3):
            k = m + 1
            total = np.zeros_like(xs)
            coef = np.ones_like(xs)  # binom(k+j-1, j) (-x)^j
            for j in range(90):
                if j:
                    coef = coef * (-xs) * (k + j - 1) / j
                total += coef / (m + j + 1)
            out[m, small] = ts ** (m + 1) * total
    big = ~small
    if np.any(big):
        xb = x[big]
        L = np.log1p(xb)
        u = 1.0 / (1.0 + xb)
        out[0, big] = L / beta
        out[1, big] = (L + u - 1.0) / beta**2
        out[2, big] = (L + 2.0 * u - 0.5 * u * u - 1.5) / beta**3
    return out


class FrailtyShape(Baseline):
    """``h0 = 1 / (1 + beta s)`` with ``beta > -eps``."""

    names = ("beta",)

    def __init__(self, eps: float = np.inf):
        self.eps = float(eps)
        self.bounds = [(-self.eps, np.inf)]

    def h0(self, s, beta):
        return 1.0 / (1.0 + beta[0] * s)

    def log_h0(self, s, beta):
        return -np.log1p(beta[0] * s)

    def H0(self, t, beta):
        return _frailty_moments(t, beta[0])[0]

    def psi0(self, s, beta):
        return (-s / (1.0 + beta[0] * s))[:, None]

    def H0star(self, t, beta):
        return -_frailty_moments(t, beta[0])[1][:, None]

    def info0(self, t, beta):
        return _frailty_moments(t, beta[0])[2][:, None, None]

    def H0_inverse(self, v, beta):
        b = beta[0]
        if b == 0.0:
            return v.copy()
        return np.expm1(b * v) / b if b > 0 else np.where(
            b * v < 50.0, np.expm1(b * v) / b, np.inf
        )


class OnsetPowerShape(Baseline):
    """``h0 = (s - c)^k`` for ``s > c`` and 0 before the onset ``c``."""

    names = ("k",)
    bounds = [(-1.0, np.inf)]

    def __init__(self, onset: float = 0.0):
        self.onset = float(onset)

    def _x(self, s):
        return np.maximum(s - self.onset, 0.0)

    def h0(self, s, beta):
        x = self._x(s)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = x[pos] ** beta[0]
        return out

    def log_h0(self, s, beta):
        x = self._x(s)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, beta[0] * np.log(np.where(x > 0, x, 1.0)), -np.inf)

    def H0(self, t, beta):
        k1 = beta[0] + 1.0
        return self._x(t) ** k1 / k1

    def psi0(self, s, beta):
        with np.errstate(divide="ignore"):
            return np.log(self._x(s))[:, None]

    def H0star(self, t, beta):
        k1 = beta[0] + 1.0
        x = self._x(t)
        out = np.zeros_like(x)
        pos = x > 0
        L = np.log(x[pos])
        out[pos] = x[pos] ** k1 * (L / k1 - 1.0 / k1**2)
        return out[:, None]

    def info0(self, t, beta):
        k1 = beta[0] + 1.0
        x = self._x(t)
        out = np.zeros_like(x)
        pos = x > 0
        L = np.log(x[pos])
        out[pos] = x[pos] ** k1 * (L * L / k1 - 2.0 * L / k1**2 + 2.0 / k1**3)
        return out[:, None, None]

    def H0_inverse(self, v, beta):
        k1 = beta[0] + 1.0
        return self.onset + (k1 * v) ** (1.0 / k1)


class TabulatedBaseline(Baseline):
    """Fixed baseline from ``(t, H0(t))`` knots, linear in ``H0``.

    The hazard is the slope on each segment, left-continuous at knots; the
    last slope is extended beyond the table.
    """

    def __init__(self, times: Sequence[float], cum_values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        H = np.asarray(cum_values, dtype=float)
        if t.ndim != 1 or t.shape != H.shape or t.size == 0:
            raise ValueError("tabulated baseline needs matching 1-d time and value arrays")
        if t[0] != 0.0:
            t, H = np.concatenate([[0.0], t]), np.concatenate([[0.0], H])
        if H[0] != 0.0:
            raise ValueError("tabulated cumulative hazard must vanish at t=0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated times must be strictly increasing")
        slopes = np.diff(H) / np.diff(t)
        if np.any(slopes <= 0):
            raise ValueError("tabulated cumulative hazard must be strictly increasing")
        self.knots, self.values, self.slopes = t, H, slopes

    def _segment(self, s):
        idx = np.searchsorted(self.knots, s, side="left") - 1
        return np.clip(idx, 0, self.slopes.size - 1)

    def h0(self, s, beta):
        return self.slopes[self._segment(s)]

    def H0(self, t, beta):
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.slopes.size - 1)
        return self.values[idx] + self.slopes[idx] * (t - self.knots[idx])


class CallableBaseline(Baseline):
    def __init__(self, hazard: Callable, cum_hazard: Callable):
        self._h, self._H = hazard, cum_hazard

    def h0(self, s, beta):
        return np.broadcast_to(np.asarray(self._h(s), dtype=float), s.shape).copy()

    def H0(self, t, beta):
        return np.broadcast_to(np.asarray(self._H(t), dtype=float), t.shape).copy()


@dataclass(frozen=True, eq=False)
class ProportionalModel(HazardModel):
    """``h(s) = theta * h0(s, beta)`` with ``psi = (1/theta, psi0)``."""

    baseline: Baseline = field(default_factory=ConstantBaseline)
    name: str = "proportional"
    flavor: str = "pm"

    @property
    def names(self):
        return ("theta",) + tuple(self.baseline.names)

    @property
    def bounds(self):
        return [(0.0, np.inf)] + list(self.baseline.bounds)

    @property
    def closed_form(self):
        return True

    @property
    def default_flavor(self):
        return self.flavor

    def _hazard(self, s, theta):
        return theta[0] * self.baseline.h0(s, theta[1:])

    def _log_hazard(self, s, theta):
        return math.log(theta[0]) + self.baseline.log_h0(s, theta[1:])

    def _cum_hazard(self, t, theta):
        return theta[0] * self.baseline.H0(t, theta[1:])

    def _score(self, s, theta):
        first = np.full((s.size, 1), 1.0 / theta[0])
        return np.hstack([first, self.baseline.psi0(s, theta[1:])])

    def _cum_score(self, t, theta):
        beta = theta[1:]
        return np.hstack(
            [self.baseline.H0(t, beta)[:, None], theta[0] * self.baseline.H0star(t, beta)]
        )

    def _info_primitive(self, t, theta):
        th, beta = theta[0], theta[1:]
        out = np.empty((t.size, self.p, self.p))
        out[:, 0, 0] = self.baseline.H0(t, beta) / th
        if self.p > 1:
            cross = self.baseline.H0star(t, beta)
            out[:, 0, 1:] = cross
            out[:, 1:, 0] = cross
            out[:, 1:, 1:] = th * self.baseline.info0(t, beta)
        return out

    def profile_rate(self, sample, beta) -> float:
        """Closed-form ``theta(beta) = N / int Y h0 ds``."""
        beta = np.asarray(beta, dtype=float)
        exposure = np.sum(self.baseline.H0(sample.time, beta) - self.baseline.H0(sample.entry, beta))
        return sample.n_events / exposure

    def inverse_cum_hazard(self, e, theta):
        e = _as_times(e)
        theta = self.check(theta)
        inv = self.baseline.H0_inverse(e / theta[0], theta[1:])
        if inv is None:
            return self._inverse_numeric(e, theta)
        return inv

    def initial(self, sample) -> Array:
        beta = np.array([_baseline_seed(self.baseline, sample)]) if self.p > 1 else np.zeros(0)
        return np.concatenate([[self.profile_rate(sample, beta)], beta])

    def for_sample(self, sample):
        if isinstance(self.baseline, FrailtyShape):
            eps = 1.0 / (2.0 * float(np.max(sample.time)))
            return ProportionalModel(FrailtyShape(eps), name=self.name, flavor=self.flavor)
        return self


def _baseline_seed(baseline: Baseline, sample) -> float:
    if isinstance(baseline, WeibullShape):
        return 1.0
    if isinstance(baseline, OnsetPowerShape):
        return 0.0
    if isinstance(baseline, FrailtyShape):
        return -0.5 * baseline.eps if np.isfinite(baseline.eps) else 0.0
    if isinstance(baseline, GompertzShape):
        return 0.1 * _gompertz_sign(sample)
    return 0.0


def _gompertz_sign(sample) -> float:
    # sign of the trend in log Nelson-Aalen increment rates over event times
    from .data import build_risk_path

    path = build_risk_path(sample)
    t = path.event_times
    if t.size < 3:
        return 1.0
    gaps = np.diff(np.concatenate([[0.0], t]))
    rate = path.events / path.at_risk / np.maximum(gaps, 1e-12 * max(t[-1], 1.0))
    c = np.corrcoef(t, np.log(rate))[0, 1]
    return -1.0 if np.isfinite(c) and c < 0 else 1.0


# ---------------------------------------------------------------------------
# Gamma


class GammaModel(HazardModel):
    """Gamma life-time distribution with shape ``alpha`` and rate ``theta``.

    The cumulative-hazard gradient uses central differences on ``H`` with
    relative step ``1e-5``; there is no closed-form information integral.
    """

    name = "gamma"
    names = ("alpha", "theta")
    bounds = [(0.0, np.inf), (0.0, np.inf)]
    closed_form = False
    default_flavor = "np"
    fd_step = 1e-5

    def _survival(self, t, theta):
        alpha, rate = theta
        S = inc_gamma_upper(rate * t, alpha)
        if np.any(S <= 0):
            raise InadmissibleParameterError(
                "gamma: survival beyond support precision at "
                f"t={float(np.max(t[S <= 0])):g}"
            )
        return S

    def _log_hazard(self, s, theta):
        alpha, rate = theta
        x = rate * s
        with np.errstate(divide="ignore"):
            return (
                alpha * math.log(rate)
                + (alpha - 1.0) * np.log(s)
                - x
                - special.gammaln(alpha)
                - np.log(self._survival(s, theta))
            )

    def _hazard(self, s, theta):
        return np.exp(self._log_hazard(s, theta))

    def _cum_hazard(self, t, theta):
        return -np.log(self._survival(t, theta))

    def _score(self, s, theta):
        alpha, rate = theta
        x = rate * s
        S = self._survival(s, theta)
        dig = digamma(alpha)
        # F0* - digamma F0, written through the upper tail to avoid cancellation
        tail_term = dig * S - log_inc_gamma_upper(x, alpha)
        psi_alpha = np.log(x) - dig + tail_term / S
        density_ratio = np.exp(alpha * np.log(x) - x - special.gammaln(alpha) - np.log(S))
        psi_theta = (alpha - x) / rate + density_ratio / rate
        return np.column_stack([psi_alpha, psi_theta])

    def _cum_score(self, t, theta):
        out = np.empty((t.size, 2))
        for i in range(2):
            step = self.fd_step * theta[i]
            up, down = theta.copy(), theta.copy()
            up[i] += step
            down[i] -= step
            out[:, i] = (self._cum_hazard(t, up) - self._cum_hazard(t, down)) / (2.0 * step)
        return out

    def inverse_cum_hazard(self, e, theta):
        e = _as_times(e)
        alpha, rate = self.check(theta)
        return special.gammainccinv(alpha, np.exp(-e)) / rate

    def initial(self, sample) -> Array:
        t = sample.time[sample.status == 1] - sample.entry[sample.status == 1]
        mean, var = float(np.mean(t)), float(np.var(t))
        if t.size < 2 or var <= 0 or mean <= 0:
            return np.array([1.0, sample.n_events / float(np.sum(sample.time - sample.entry))])
        alpha = float(np.clip(mean * mean / var, 0.05, 50.0))
        return np.array([alpha, alpha / mean])


# ---------------------------------------------------------------------------
# Compound Poisson frailty


def _cp_E(a: Array | float, L: Array) -> tuple[Array, Array]:
    """``E = (1 - e^{-aL}) / a`` and ``dE/da`` with small-``aL`` series."""
    aL = a * L
    small = np.abs(aL) < 1e-2
    E = np.empty_like(L)
    dE = np.empty_like(L)
    if np.any(small):
        Ls, u = L[small], aL[small]
        e_sum = np.zeros_like(Ls)
        d_sum = np.zeros_like(Ls)
        # E = L sum_k (-u)^k/(k+1)!, dE/da = L^2 sum_{k>=1} k (-1)^k u^(k-1)/(k+1)!
        for k in range(12):
            e_sum += (-u) ** k / math.factorial(k + 1)
            if k:
                d_sum += k * (-1) ** k * u ** (k - 1) / math.factorial(k + 1)
        E[small] = Ls * e_sum
        dE[small] = Ls * Ls * d_sum
    big = ~small
    if np.any(big):
        Lb, ab = L[big], (a if np.isscalar(a) else a[big])
        em = np.expm1(-ab * Lb)
        E[big] = -em / ab
        dE[big] = (ab * Lb * np.exp(-ab * Lb) + em) / ab**2
    return E, dE


class CompoundPoissonFrailty(HazardModel):
    """Population hazard under compound Poisson frailty on a base family.

    ``h = lambda / (1 + (delta/alpha) Lambda)^alpha``; all gradients are
    analytic given the base family's score and cumulative gradient.
    """

    default_flavor = "np"
    closed_form = False
    log_branch = 1e-8

    def __init__(self, base: HazardModel, name: str = "cpfrailty"):
        self.base = base
        self.name = name
        self.names = tuple(base.names) + ("alpha", "delta")
        self.bounds = list(base.bounds) + [(0.0, np.inf), (0.0, np.inf)]

    def _parts(self, t, theta):
        q = self.base.p
        bt, alpha, delta = theta[:q], theta[q], theta[q + 1]
        Lam = self.base._cum_hazard(t, bt)
        x = delta * Lam / alpha
        return bt, alpha, delta, Lam, x, np.log1p(x)

    def _hazard(self, s, theta):
        bt, alpha, delta, Lam, x, L = self._parts(s, theta)
        return self.base._hazard(s, bt) * np.exp(-alpha * L)

    def _log_hazard(self, s, theta):
        bt, alpha, delta, Lam, x, L = self._parts(s, theta)
        return self.base._log_hazard(s, bt) - alpha * L

    def _cum_hazard(self, t, theta):
        bt, alpha, delta, Lam, x, L = self._parts(t, theta)
        a = alpha - 1.0
        if abs(a) < self.log_branch:
            return L / delta
        return alpha * (-np.expm1(-a * L) / a) / delta

    def _score(self, s, theta):
        bt, alpha, delta, Lam, x, L = self._parts(s, theta)
        base_part = self.base._score(s, bt) - (delta / (1.0 + x))[:, None] * self.base._cum_score(s, bt)
        psi_alpha = -L + x / (1.0 + x)
        psi_delta = -Lam / (1.0 + x)
        return np.column_stack([base_part, psi_alpha, psi_delta])

    def _cum_score(self, t, theta):
        bt, alpha, delta, Lam, x, L = self._parts(t, theta)
        a = alpha - 1.0
        E, dE = _cp_E(a, L)
        H = alpha * E / delta
        decay = np.exp(-alpha * L)
        base_part = decay[:, None] * self.base._cum_score(t, bt)
        d_alpha = (E + alpha * dE - np.exp(-a * L) * x / (1.0 + x)) / delta
        d_delta = -H / delta + Lam * decay / delta
        return np.column_stack([base_part, d_alpha, d_delta])

    def total_mass(self, theta) -> float:
        """``H(inf)``: finite (a defective distribution) when ``alpha > 1``."""
        theta = self.check(theta)
        alpha, delta = theta[-2], theta[-1]
        return alpha / ((alpha - 1.0) * delta) if alpha > 1.0 else np.inf

    def inverse_cum_hazard(self, e, theta):
        e = _as_times(e)
        theta = self.check(theta)
        q = self.base.p
        bt, alpha, delta = theta[:q], theta[q], theta[q + 1]
        a = alpha - 1.0
        out = np.full(e.shape, np.inf)
        if abs(a) < self.log_branch:
            x = np.expm1(delta * e) / alpha
            ok = np.isfinite(x)
        else:
            arg = -e * delta * a / alpha  # log1p(arg) = -a L
            ok = arg > -1.0
            with np.errstate(invalid="ignore", divide="ignore"):
                x = np.expm1(-np.log1p(np.where(ok, arg, 0.0)) / a)
        Lam = alpha * x[ok] / delta
        out[ok] = self.base.inverse_cum_hazard(Lam, bt)
        return out

    def initial(self, sample) -> Array:
        return np.concatenate([self.base.initial(sample), [1.0, 0.1]])

    def describe(self) -> str:
        return f"{self.name}[{self.base.describe()}]"


# ---------------------------------------------------------------------------
# Fixed (fully specified) model


class FixedModel(HazardModel):
    """Fully specified hazard with no free parameters."""

    closed_form = True
    names = ()
    bounds = []

    def __init__(self, baseline: Baseline, name: str = "fixed"):
        self.baseline = baseline
        self.name = name

    def _hazard(self, s, theta):
        return self.baseline.h0(s, theta)

    def _log_hazard(self, s, theta):
        return self.baseline.log_h0(s, theta)

    def _cum_hazard(self, t, theta):
        return self.baseline.H0(t, theta)

    def _score(self, s, theta):
        return np.zeros((s.size, 0))

    def _cum_score(self, t, theta):
        return np.zeros((t.size, 0))

    def _info_primitive(self, t, theta):
        return np.zeros((t.size, 0, 0))

    def initial(self, sample):
        return np.zeros(0)


# ---------------------------------------------------------------------------
# Parameter masks


class RestrictedModel(HazardModel):
    """A model with some parameters held at fixed values.

    Evaluators take the reduced vector of free parameters; scores and
    information blocks are the free-parameter components of the full ones.
    """

    def __init__(self, full: HazardModel, fixed: dict[str, float]):
        unknown = set(fixed) - set(full.names)
        if unknown:
            raise ValueError(f"{full.name} has no parameter(s) {sorted(unknown)}")
        self.full = full
        self.fixed = {k: float(v) for k, v in fixed.items()}
        self.free = [i for i, nm in enumerate(full.names) if nm not in self.fixed]
        self.names = tuple(full.names[i] for i in self.free)
        self.bounds = [full.bounds[i] for i in self.free]
        self.name = full.name
        self.closed_form = full.closed_form
        self.default_flavor = full.default_flavor
        probe = np.array([0.5 * (lo + hi) if np.isfinite(lo + hi) else 1.0 for lo, hi in full.bounds])
        for i, nm in enumerate(full.names):
            if nm in self.fixed:
                probe[i] = self.fixed[nm]
        self._template = probe
        for i, nm in enumerate(full.names):
            if nm in self.fixed:
                lo, hi = full.bounds[i]
                if not lo < self.fixed[nm] < hi:
                    raise InadmissibleParameterError(f"fixed {nm}={self.fixed[nm]:g} inadmissible")

    def expand(self, theta) -> Array:
        out = self._template.copy()
        out[self.free] = np.asarray(theta, dtype=float)
        return out

    def _hazard(self, s, theta):
        return self.full._hazard(s, self.expand(theta))

    def _log_hazard(self, s, theta):
        return self.full._log_hazard(s, self.expand(theta))

    def _cum_hazard(self, t, theta):
        return self.full._cum_hazard(t, self.expand(theta))

    def _score(self, s, theta):
        return self.full._score(s, self.expand(theta))[:, self.free]

    def _cum_score(self, t, theta):
        return self.full._cum_score(t, self.expand(theta))[:, self.free]

    def _info_primitive(self, t, theta):
        full = self.full._info_primitive(t, self.expand(theta))
        return full[:, self.free][:, :, self.free]

    def inverse_cum_hazard(self, e, theta):
        return self.full.inverse_cum_hazard(e, self.expand(self.check(theta)))

    def initial(self, sample):
        return self.full.initial(sample)[self.free]

    def for_sample(self, sample):
        return RestrictedModel(self.full.for_sample(sample), self.fixed)

    def restrict(self, fixed):
        return RestrictedModel(self.full, {**self.fixed, **fixed})

    def describe(self) -> str:
        pinned = ",".join(f"{k}={v:g}" for k, v in self.fixed.items())
        return f"{self.full.describe()}|{pinned}"


# ---------------------------------------------------------------------------
# Constructors


def proportional_model(baseline: Baseline, name: str = "proportional") -> ProportionalModel:
    return ProportionalModel(baseline, name=name)


def exponential_model() -> ProportionalModel:
    return ProportionalModel(ConstantBaseline(), name="exponential")


def weibull_model() -> ProportionalModel:
    return ProportionalModel(WeibullShape(), name="weibull")


def gompertz_model() -> ProportionalModel:
    return ProportionalModel(GompertzShape(), name="gompertz")


def simple_frailty_model(eps: float = np.inf) -> ProportionalModel:
    """``h = theta / (1 + beta s)``; ``for_sample`` sets ``eps = 1/(2 max exit)``."""
    return ProportionalModel(FrailtyShape(eps), name="frailty")


def onset_weibull_model(onset: float = 0.0) -> ProportionalModel:
    """``lambda(t) = a (t - c)^k`` for ``t > c``, parameters ``(a, k)``."""
    return _OnsetWeibull(OnsetPowerShape(onset), name="onset_weibull")


class _OnsetWeibull(ProportionalModel):
    @property
    def names(self):
        return ("a", "k")


def gamma_model() -> GammaModel:
    return GammaModel()


def compound_poisson_frailty_model(base: HazardModel | None = None) -> CompoundPoissonFrailty:
    return CompoundPoissonFrailty(base if base is not None else onset_weibull_model())


def fixed_model(hazard: Callable, cum_hazard: Callable, name: str = "fixed") -> FixedModel:
    return FixedModel(CallableBaseline(hazard, cum_hazard), name=name)


def tabulated_model(times, cum_values, name: str = "fixed") -> FixedModel:
    return FixedModel(TabulatedBaseline(times, cum_values), name=name)


MODEL_IDS = ("exponential", "weibull", "gompertz", "frailty", "gamma", "cpfrailty")


def model_from_id(model_id: str) -> HazardModel:
    """Resolve a CLI model identifier; ``fixed:<file>`` reads ``t,H0`` rows."""
    factories = {
        "exponential": exponential_model,
        "weibull": weibull_model,
        "gompertz": gompertz_model,
        "frailty": simple_frailty_model,
        "gamma": gamma_model,
        "cpfrailty": compound_poisson_frailty_model,
    }
    if model_id in factories:
        return factories[model_id]()
    if model_id.startswith("fixed:"):
        path = model_id[len("fixed:"):]
        times, values = _read_table(path)
        return tabulated_model(times, values, name=model_id)
    raise ValueError(f"unknown model id {model_id!r}; choose from {', '.join(MODEL_IDS)} or fixed:<file>")


def _read_table(path: str) -> tuple[Array, Array]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if not rows and lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
            if len(values) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns t,H0")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty table")
    table = np.array(rows)
    return table[:, 0], table[:, 1]
