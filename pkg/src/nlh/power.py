"""Simulation and detection-power predictions for NLH curves.

Three kinds of true hazard are supported:

* :class:`FixedHazard`, any fully specified model ``h(s, theta)``;
* :class:`LocalAlternative`, ``h(s, theta) {1 + phi(s) delta / sqrt(n)}``;
* :class:`FrailtyContamination`, subject rates ``theta Z`` with ``Z``
  gamma distributed, mean 1 and variance ``sigma2``.

Monte Carlo replicates draw their generators from
``SeedSequence(seed).spawn(reps)``, so replicate ``i`` sees the same stream
whatever the number of workers, and summaries are accumulated with
``math.fsum`` in replicate order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .bands import empirical_band_positions
from .data import SurvivalSample, build_risk_path
from .engine import BAND_LEVEL, nlh_curve
from .fitting import DegenerateFitError, SingularInformationError, fit_ml
from .models import HazardModel, exponential_model, model_from_id, weibull_model

__all__ = [
    "FixedHazard",
    "LocalAlternative",
    "FrailtyContamination",
    "Censoring",
    "Truncation",
    "Scenario",
    "PowerPrediction",
    "McSummary",
    "simulate_sample",
    "least_false_theta",
    "drift_curve",
    "local_mean_shift",
    "frailty_power_prediction",
    "predict",
    "mc_study",
    "scenario_from_dict",
]

_QUAD = dict(epsabs=1e-13, epsrel=1e-11, limit=500)


def _cumulative_quad(f: Callable, t: np.ndarray) -> np.ndarray:
    """``int_0^t f`` at each ``t``, integrating piecewise between sorted points."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(t)
    out = np.empty(t.size)
    acc, prev = 0.0, 0.0
    for i in order:
        if t[i] > prev:
            acc += integrate.quad(f, prev, t[i], **_QUAD)[0]
            prev = t[i]
        out[i] = acc
    return out


# ---------------------------------------------------------------------------
# True hazards


@dataclass(frozen=True, eq=False)
class FixedHazard:
    """Truth given by a fully specified member of a model family."""

    model: HazardModel
    theta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(map(float, self.model.check(self.theta))))

    def hazard(self, s) -> np.ndarray:
        return self.model.hazard(s, self.theta)

    def cum_hazard(self, t) -> np.ndarray:
        return self.model.cum_hazard(t, self.theta)

    def survivor(self, s) -> np.ndarray:
        return np.exp(-self.cum_hazard(s))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.model.inverse_cum_hazard(rng.standard_exponential(size), self.theta)

    def describe(self) -> dict:
        return {"kind": "model", "model": self.model.describe(), "theta": list(self.theta)}


@dataclass(frozen=True, eq=False)
class LocalAlternative:
    """``h(s, theta) {1 + phi(s) delta / sqrt(n)}``, truncated at zero."""

    model: HazardModel
    theta: tuple[float, ...]
    phi: Callable
    delta: float
    n: int
    label: str = "phi"

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(map(float, self.model.check(self.theta))))

    def hazard(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        base = self.model.hazard(s, self.theta)
        return np.maximum(base * (1.0 + np.asarray(self.phi(s)) * self.delta / math.sqrt(self.n)), 0.0)

    def cum_hazard(self, t) -> np.ndarray:
        return _cumulative_quad(lambda s: float(self.hazard(s)[0]), t)

    def survivor(self, s) -> np.ndarray:
        return np.exp(-self.cum_hazard(s))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        e = rng.standard_exponential(size)
        return _invert_increasing(self.cum_hazard, e)

    def describe(self) -> dict:
        return {
            "kind": "local",
            "model": self.model.describe(),
            "theta": list(self.theta),
            "phi": self.label,
            "delta": self.delta,
            "n": self.n,
        }


@dataclass(frozen=True)
class FrailtyContamination:
    """Constant rates ``theta Z`` with gamma ``Z`` of mean 1 and variance ``sigma2``.

    The population hazard is ``theta / (1 + sigma2 theta s)``.
    """

    sigma2: float
    theta: float = 1.0

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError("frailty variance must be non-negative")
        if not self.theta > 0:
            raise ValueError("base rate must be positive")

    def hazard(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.theta / (1.0 + self.sigma2 * self.theta * s)

    def cum_hazard(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.sigma2 == 0:
            return self.theta * t
        return np.log1p(self.sigma2 * self.theta * t) / self.sigma2

    def survivor(self, s) -> np.ndarray:
        return np.exp(-self.cum_hazard(s))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        e = rng.standard_exponential(size)
        if self.sigma2 == 0:
            return e / self.theta
        z = rng.gamma(1.0 / self.sigma2, self.sigma2, size)
        return e / (self.theta * z)

    def describe(self) -> dict:
        return {"kind": "frailty", "theta": self.theta, "sigma2": self.sigma2}


def _invert_increasing(cum: Callable, e: np.ndarray) -> np.ndarray:
    """Vectorized bisection for ``cum(t) = e``."""
    e = np.asarray(e, dtype=float)
    lo = np.zeros(e.size)
    hi = np.ones(e.size)
    for _ in range(200):
        grow = cum(hi) < e
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2.0 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = cum(mid) < e
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


# ---------------------------------------------------------------------------
# Observation schemes


@dataclass(frozen=True)
class Censoring:
    """Independent censoring: ``none``, ``exponential(rate)`` or ``uniform(0, upper)``."""

    kind: str = "none"
    rate: float = 1.0
    upper: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "exponential", "uniform"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if self.kind == "exponential" and not self.rate > 0:
            raise ValueError("censoring rate must be positive")
        if self.kind == "uniform" and not self.upper > 0:
            raise ValueError("censoring upper limit must be positive")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        if self.kind == "uniform":
            return rng.uniform(0.0, self.upper, size)
        return np.full(size, np.inf)

    def survivor(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.kind == "exponential":
            return np.exp(-self.rate * s)
        if self.kind == "uniform":
            return np.clip(1.0 - s / self.upper, 0.0, 1.0)
        return np.ones_like(s)


@dataclass(frozen=True)
class Truncation:
    """Delayed entry at ``V ~ uniform(0, upper)``; subjects are kept when their exit exceeds ``V``."""

    kind: str = "none"
    upper: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform"):
            raise ValueError(f"unknown truncation kind {self.kind!r}")
        if self.kind == "uniform" and not self.upper > 0:
            raise ValueError("truncation upper limit must be positive")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(0.0, self.upper, size)
        return np.zeros(size)


def simulate_sample(
    truth,
    n: int,
    seed=None,
    censoring: Censoring | None = None,
    truncation: Truncation | None = None,
    tau: float | None = None,
) -> SurvivalSample:
    """Draw ``n`` observed subjects.

    Lifetimes come from inverting the cumulative hazard at unit exponentials.
    Censoring is independent; under truncation, draws whose exit does not
    exceed the entry time are discarded and replaced.  ``tau`` closes the
    study administratively.

    Parameters
    ----------
    seed : int, SeedSequence or Generator, optional
    """
    if n < 1:
        raise ValueError("n must be positive")
    censoring = censoring or Censoring()
    truncation = truncation or Truncation()
    if tau is not None and not tau > 0:
        raise ValueError("tau must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, status, entry = [], [], []
    have, tries = 0, 0
    while have < n:
        tries += 1
        if tries > 1000:
            raise RuntimeError("truncation keeps too few subjects; check the scenario")
        m = n - have if truncation.kind == "none" else 2 * (n - have) + 8
        t = truth.draw(rng, m)
        c = censoring.draw(rng, m)
        v = truncation.draw(rng, m)
        exit_ = np.minimum(t, c)
        d = t <= c
        if tau is not None:
            d &= t <= tau
            exit_ = np.minimum(exit_, tau)
        keep = np.flatnonzero((exit_ > v) & np.isfinite(exit_))[: n - have]
        times.append(exit_[keep])
        status.append(d[keep])
        entry.append(v[keep])
        have += keep.size
    return SurvivalSample.from_arrays(
        np.concatenate(times),
        np.concatenate(status).astype(int),
        entry=np.concatenate(entry) if truncation.kind != "none" else None,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# Predictions


def _default_exposure(truth, censoring: Censoring | None) -> Callable:
    cens = censoring or Censoring()
    return lambda s: truth.survivor(s) * cens.survivor(s)


def least_false_theta(model: HazardModel, truth, y: Callable | None = None, tau: float = np.inf, init=None) -> np.ndarray:
    """Parameter maximizing ``int_0^tau y {h log h(., theta) - h(., theta)} ds``.

    ``y`` is the per-subject exposure, by default the uncensored survivor of
    the truth.  Rate-only proportional models (the exponential) have the
    closed form ``int y h / int y h0``.
    """
    y = y or _default_exposure(truth, None)

    if model.p == 1 and model.names == ("theta",):
        num = integrate.quad(lambda s: _exposed(y, s, lambda: float(truth.hazard(s)[0])), 0.0, tau, **_QUAD)[0]
        den = integrate.quad(lambda s: _exposed(y, s, lambda: float(model.hazard(s, [1.0])[0])), 0.0, tau, **_QUAD)[0]
        return np.array([num / den])

    def integrand(s, theta):
        s_arr = np.array([s])
        h = float(truth.hazard(s_arr)[0])
        hm = float(model.hazard(s_arr, theta)[0])
        ps = model.score(s_arr, theta)[0]
        w = _scalar(y, s)
        if w == 0.0:
            return np.zeros(model.p + 1)
        val = w * (h * math.log(hm) - hm) if hm > 0 else (0.0 if h == 0 else -np.inf)
        return np.concatenate([[val], w * (h - hm) * ps])

    def neg(eta):
        try:
            theta = model.from_free(eta)
            model.check(theta)
        except ValueError:
            return np.inf, np.zeros(eta.size)
        with np.errstate(over="ignore", invalid="ignore"):
            res = integrate.quad_vec(lambda s: integrand(s, theta), 0.0, tau, epsabs=1e-12, epsrel=1e-10, limit=500)[0]
        grad = res[1:] * model.free_jacobian(eta)
        return -res[0], -grad

    if init is None:
        pilot = simulate_sample(truth, 2000, 12345)
        init = fit_ml(model, pilot).theta
    out = optimize.minimize(neg, model.to_free(init), jac=True, method="BFGS", options={"gtol": 1e-10})
    return model.from_free(out.x)


def _scalar(y: Callable, s: float) -> float:
    return float(np.asarray(y(np.array([s]))).ravel()[0])


def _exposed(y: Callable, s: float, f: Callable, size: int | None = None):
    # f is skipped where the exposure is zero, since it may overflow out there
    w = _scalar(y, s)
    if w == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return w * f()


def drift_curve(model: HazardModel, theta0, truth, t, plot: str = "A", y: Callable | None = None) -> np.ndarray:
    """Limit of ``D_n(t)/sqrt(n)``: ``int_0^t k {h - h(., theta0)} ds``.

    Type A has ``k = 1``, giving ``H(t) - H(t, theta0)``; Type B has ``k = y``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    plot = plot.upper()
    if plot == "A":
        return truth.cum_hazard(t) - model.cum_hazard(t, theta0)
    if plot != "B":
        raise ValueError("drift is available for Type A and B")
    y = y or _default_exposure(truth, None)
    return _cumulative_quad(
        lambda s: _exposed(y, s, lambda: float(truth.hazard(np.array([s]))[0]) - float(model.hazard(np.array([s]), theta0)[0])),
        t,
    )


def _weight(plot: str, y: Callable) -> Callable:
    if plot == "A":
        return lambda s: 1.0
    if plot == "B":
        return lambda s: _scalar(y, s)
    raise ValueError("predictions are available for Type A and B")


def _kappa_pieces(model, theta, t, k, y, tau):
    """``int_0^t k^2 h / y``, ``int_0^t k h psi`` and ``Sigma = int_0^tau y psi psi^T h``."""
    theta = model.check(theta)
    p = model.p

    def h(s):
        return float(model.hazard(np.array([s]), theta)[0])

    def psi(s):
        return model.score(np.array([s]), theta)[0]

    sigma = integrate.quad_vec(
        lambda s: _exposed(y, s, lambda: h(s) * np.outer(psi(s), psi(s)).ravel(), p * p), 0.0, tau, epsabs=1e-13, epsrel=1e-11, limit=500
    )[0].reshape(p, p)
    lead = _cumulative_quad(lambda s: k(s) ** 2 * h(s) / _scalar(y, s), t)
    C = np.column_stack([_cumulative_quad(lambda s, j=j: k(s) * h(s) * psi(s)[j], t) for j in range(p)])
    return lead, C, sigma


def local_mean_shift(
    model: HazardModel,
    theta,
    phi: Callable,
    t,
    plot: str = "B",
    y: Callable | None = None,
    tau: float = np.inf,
) -> tuple[np.ndarray, np.ndarray]:
    """``a(t)`` and ``kappa(t)`` for the local alternative along ``phi``.

    The NLH curve is then approximately normal with mean ``delta a/kappa``.
    ``y`` defaults to the model's own uncensored survivor.
    """
    theta = model.check(theta)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if y is None:
        y = lambda s: np.exp(-model.cum_hazard(s, theta))  # noqa: E731
    k = _weight(plot.upper(), y)

    def h(s):
        return float(model.hazard(np.array([s]), theta)[0])

    def ph(s):
        return float(np.asarray(phi(np.array([s]))).ravel()[0])

    lead, C, sigma = _kappa_pieces(model, theta, t, k, y, tau)
    direct = _cumulative_quad(lambda s: k(s) * h(s) * ph(s), t)
    full = integrate.quad_vec(
        lambda s: _exposed(y, s, lambda: ph(s) * h(s) * model.score(np.array([s]), theta)[0], model.p),
        0.0,
        tau,
        epsabs=1e-13,
        epsrel=1e-11,
        limit=500,
    )[0]
    a = direct - C @ np.linalg.solve(sigma, full)
    kappa2 = lead - np.einsum("ij,ij->i", C, np.linalg.solve(sigma, C.T).T)
    return a, np.sqrt(np.maximum(kappa2, 0.0))


def frailty_power_prediction(theta: float, sigma2: float, n: int, t) -> np.ndarray:
    """Approximate mean of ``NLH_B(t)`` under gamma frailty contamination.

    ``sqrt(n) sigma2 theta t exp(-theta t / 2) / sqrt(1 - exp(-theta t))``,
    derived assuming no censoring and observation over the whole half-line.
    """
    if sigma2 < 0:
        raise ValueError("frailty variance must be non-negative")
    x = theta * np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(x <= 0):
        raise ValueError("prediction needs theta t > 0")
    return math.sqrt(n) * sigma2 * x * np.exp(-0.5 * x) / np.sqrt(-np.expm1(-x))


@dataclass
class PowerPrediction:
    """Predicted behaviour of a curve under a given truth."""

    times: np.ndarray
    plot: str
    theta0: np.ndarray | None = None
    drift: np.ndarray | None = None
    mean_nlh: np.ndarray | None = None
    closed_form: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        def lst(a):
            return None if a is None else [float(v) for v in np.atleast_1d(a)]

        return {
            "times": lst(self.times),
            "plot": self.plot,
            "theta0": lst(self.theta0),
            "drift": lst(self.drift),
            "mean_nlh": lst(self.mean_nlh),
            "closed_form": lst(self.closed_form),
            "notes": list(self.notes),
        }


def predict(model: HazardModel, truth, n: int, t, plot: str = "B", censoring: Censoring | None = None) -> PowerPrediction:
    """Detection-power prediction for ``model`` when the data follow ``truth``.

    Fixed truths give the least-false parameter, the drift and the implied
    mean ``sqrt(n) pi(t)/kappa0(t)``.  Local alternatives and frailty
    contamination give the local mean shift ``delta a(t)/kappa(t)``; for an
    exponential model under frailty the closed form is reported alongside.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    plot = plot.upper()
    pred = PowerPrediction(times=t, plot=plot)
    y = _default_exposure(truth, censoring)
    if isinstance(truth, FrailtyContamination):
        theta = np.array([truth.theta])
        if model.names != ("theta",) or model.describe() != "exponential":
            pred.notes.append("frailty prediction is derived for the constant-hazard model")
            return pred
        base_y = lambda s: np.exp(-truth.theta * np.asarray(s, dtype=float)) * (censoring or Censoring()).survivor(s)  # noqa: E731
        a, kappa = local_mean_shift(model, theta, lambda s: -truth.theta * np.asarray(s), t, plot, y=base_y)
        delta = truth.sigma2 * math.sqrt(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            pred.mean_nlh = delta * a / kappa
        pred.theta0 = theta
        if plot == "B" and (censoring is None or censoring.kind == "none"):
            pred.closed_form = frailty_power_prediction(truth.theta, truth.sigma2, n, t)
            pred.notes.append("closed form assumes no censoring and the whole half-line as window")
        return pred
    if isinstance(truth, LocalAlternative):
        model_y = lambda s: np.exp(-truth.model.cum_hazard(s, truth.theta)) * (censoring or Censoring()).survivor(s)  # noqa: E731
        a, kappa = local_mean_shift(truth.model, truth.theta, truth.phi, t, plot, y=model_y)
        with np.errstate(divide="ignore", invalid="ignore"):
            pred.mean_nlh = truth.delta * a / kappa
        pred.theta0 = np.asarray(truth.theta)
        return pred
    theta0 = least_false_theta(model, truth, y)
    pred.theta0 = theta0
    pred.drift = drift_curve(model, theta0, truth, t, plot, y)
    lead, C, sigma = _kappa_pieces(model, theta0, t, _weight(plot, y), y, np.inf)
    kappa0 = np.sqrt(np.maximum(lead - np.einsum("ij,ij->i", C, np.linalg.solve(sigma, C.T).T), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        pred.mean_nlh = math.sqrt(n) * pred.drift / kappa0
    pred.notes.append("kappa0 evaluated at the least false parameter with the true exposure")
    return pred


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True, eq=False)
class Scenario:
    """Data-generating setup for Monte Carlo studies."""

    truth: object
    n: int
    censoring: Censoring = field(default_factory=Censoring)
    truncation: Truncation = field(default_factory=Truncation)
    tau: float | None = None

    def simulate(self, seed) -> SurvivalSample:
        return simulate_sample(self.truth, self.n, seed, self.censoring, self.truncation, self.tau)

    def describe(self) -> dict:
        return {
            "truth": self.truth.describe(),
            "n": self.n,
            "censoring": {"kind": self.censoring.kind, "rate": self.censoring.rate, "upper": self.censoring.upper},
            "truncation": {"kind": self.truncation.kind, "upper": self.truncation.upper},
            "tau": self.tau,
        }


@dataclass
class McSummary:
    """Aggregated Monte Carlo results, keyed by ``"<plot>-<flavor>"``.

    ``exceed`` holds pointwise rates of ``|NLH| > band_level`` at each probe,
    ``band_exceed`` the rates of the band maximum exceeding each threshold,
    and ``mean``/``se`` the replication mean of NLH at each probe with its
    Monte Carlo standard error.
    """

    reps: int
    used: int
    probes: list
    thresholds: list[float]
    band: tuple[float, float]
    band_level: float
    exceed: dict[str, list[float]]
    band_exceed: dict[str, list[float]]
    mean: dict[str, list[float]]
    se: dict[str, list[float]]
    failures: int = 0

    def as_dict(self) -> dict:
        return {
            "reps": self.reps,
            "used": self.used,
            "failures": self.failures,
            "probes": self.probes,
            "thresholds": self.thresholds,
            "band": list(self.band),
            "band_level": self.band_level,
            "exceed": self.exceed,
            "band_exceed": self.band_exceed,
            "mean": self.mean,
            "se": self.se,
        }


def _median_event_time(sample: SurvivalSample) -> float:
    path = build_risk_path(sample)
    cum = np.cumsum(path.events)
    return float(path.event_times[np.searchsorted(cum, math.ceil(cum[-1] / 2.0))])


@dataclass(frozen=True, eq=False)
class _Job:
    scenario: Scenario
    model: HazardModel
    curves: tuple[tuple[str, str], ...]
    probes: tuple
    thresholds: tuple[float, ...]
    band: tuple[float, float]
    band_level: float
    band_grid: int


def _replicate(job: _Job, seed) -> dict | None:
    sample = job.scenario.simulate(np.random.default_rng(seed))
    if sample.n_events == 0:
        return None
    try:
        fit = fit_ml(job.model, sample)
    except (DegenerateFitError, SingularInformationError, ValueError):
        return None
    probes = np.array([_median_event_time(sample) if p == "median" else float(p) for p in job.probes])
    path = build_risk_path(sample)
    a1, a2 = empirical_band_positions(path, *job.band)
    # the path moves between event times too, so the band maximum also
    # looks at an even grid over the band
    extra = np.concatenate([probes, np.linspace(a1, a2, job.band_grid)]) if job.band_grid else probes
    out = {}
    for plot, flavor in job.curves:
        try:
            curve = nlh_curve(fit, plot, flavor, at=extra[extra > 0])
        except SingularInformationError:
            return None
        idx = np.searchsorted(curve.times, probes)
        idx = np.minimum(idx, curve.times.size - 1)
        vals = np.where(curve.times[idx] == probes, curve.nlh[idx], np.nan)
        peak = curve.max_abs(a1, a2)
        out[f"{plot}-{flavor}"] = (vals, peak)
    return out


def _run_chunk(job: _Job, seeds) -> list:
    return [_replicate(job, s) for s in seeds]


def mc_study(
    scenario: Scenario,
    model: HazardModel,
    plots: Sequence[str] = ("A", "B"),
    flavors: Sequence[str] = ("pm",),
    reps: int = 1000,
    probes: Sequence = ("median",),
    seed: int | None = 0,
    band: tuple[float, float] = (0.1, 0.9),
    thresholds: Sequence[float] = (1.96, 3.05),
    band_level: float = BAND_LEVEL,
    band_grid: int = 400,
    workers: int = 1,
) -> McSummary:
    """Replicate fit-and-curve over simulated samples.

    Probes are times or ``"median"``, the time of the middle event of each
    replicate.  The band maximum runs over the empirical band whose ends are
    where the exposure fraction reaches ``band``, taken over event times,
    their left limits and ``band_grid`` evenly spaced times.  Replicates whose fit fails
    are counted in ``failures`` and left out of the rates.

    Replicate ``i`` uses ``SeedSequence(seed).spawn(reps)[i]``; with
    ``workers > 1`` chunks run in separate processes and the result is the
    same as a serial run.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    seeds = np.random.SeedSequence(seed).spawn(reps)
    job = _Job(
        scenario,
        model,
        tuple((p.upper(), f) for p in plots for f in flavors),
        tuple(probes),
        tuple(float(x) for x in thresholds),
        tuple(band),
        float(band_level),
        int(band_grid),
    )
    if workers > 1:
        chunks = [seeds[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [job] * workers, chunks))
        results = [None] * reps
        for w, part in enumerate(parts):
            for j, r in enumerate(part):
                results[w + j * workers] = r
    else:
        results = _run_chunk(job, seeds)

    good = [r for r in results if r is not None]
    keys = [f"{p}-{f}" for p, f in job.curves]
    exceed, band_exceed, mean, se = {}, {}, {}, {}
    for key in keys:
        vals = np.array([r[key][0] for r in good]).reshape(len(good), len(job.probes))
        peaks = np.array([r[key][1] for r in good])
        ex, mu, sd = [], [], []
        for j in range(len(job.probes)):
            v = vals[:, j]
            v = v[np.isfinite(v)]
            m = v.size
            ex.append(math.fsum(np.abs(v) > band_level) / m if m else float("nan"))
            mj = math.fsum(v) / m if m else float("nan")
            mu.append(mj)
            sd.append(math.sqrt(math.fsum((v - mj) ** 2) / (m - 1) / m) if m > 1 else float("nan"))
        exceed[key], mean[key], se[key] = ex, mu, sd
        fin = peaks[np.isfinite(peaks)]
        band_exceed[key] = [math.fsum(fin > c) / fin.size if fin.size else float("nan") for c in job.thresholds]
    return McSummary(
        reps=reps,
        used=len(good),
        probes=list(job.probes),
        thresholds=list(job.thresholds),
        band=job.band,
        band_level=job.band_level,
        exceed=exceed,
        band_exceed=band_exceed,
        mean=mean,
        se=se,
        failures=reps - len(good),
    )


# ---------------------------------------------------------------------------
# Scenario documents


_PHI = {
    # directions of common one-parameter extensions at their null value
    "frailty": lambda model, theta: (lambda s: -model.cum_hazard(s, theta)),
    "weibull": lambda model, theta: (lambda s: 1.0 + np.log(s)),
    "gompertz": lambda model, theta: (lambda s: np.asarray(s, dtype=float)),
}


def truth_from_dict(doc: dict, n: int):
    """Build a truth from ``{"kind": ...}``.

    Kinds: ``exponential`` (``rate``), ``weibull`` (``a``, ``k`` with
    ``H = a t^k``), ``model`` (``model`` id and ``theta``), ``frailty``
    (``theta``, ``sigma2``) and ``local`` (``model``, ``theta``, ``phi`` in
    ``frailty|weibull|gompertz``, ``delta``).
    """
    kind = doc.get("kind")
    if kind == "exponential":
        return FixedHazard(exponential_model(), (float(doc.get("rate", 1.0)),))
    if kind == "weibull":
        return FixedHazard(weibull_model(), (float(doc["a"]), float(doc["k"])))
    if kind == "model":
        return FixedHazard(model_from_id(doc["model"]), tuple(doc["theta"]))
    if kind == "frailty":
        return FrailtyContamination(float(doc["sigma2"]), float(doc.get("theta", 1.0)))
    if kind == "local":
        model = model_from_id(doc["model"])
        theta = model.check(doc["theta"])
        name = doc["phi"]
        if name not in _PHI:
            raise ValueError(f"unknown direction {name!r}; choose from {', '.join(_PHI)}")
        return LocalAlternative(model, tuple(theta), _PHI[name](model, theta), float(doc["delta"]), n, name)
    raise ValueError(f"unknown truth kind {kind!r}")


def scenario_from_dict(doc: dict) -> Scenario:
    """Scenario from its JSON form.

    ``{"n": 100, "truth": {...}, "censoring": {"kind": "exponential",
    "rate": 1}, "truncation": {"kind": "uniform", "upper": 0.5}, "tau": null}``
    """
    if "n" not in doc or "truth" not in doc:
        raise ValueError("scenario needs 'n' and 'truth'")
    n = int(doc["n"])
    cens = Censoring(**doc.get("censoring", {}))
    trunc = Truncation(**doc.get("truncation", {}))
    return Scenario(truth_from_dict(doc["truth"], n), n, cens, trunc, doc.get("tau"))
