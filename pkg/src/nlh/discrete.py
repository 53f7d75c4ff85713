"""Time-discrete hazard models, their ML fits and NLH curves.

Data are life tables: ``Y_i`` at risk and ``dN_i`` failures in interval
``i``.  A model gives the conditional failure probability ``h_i(theta)`` and
its gradient ``h*_i(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DiscreteTable
from .engine import KAPPA_FLOOR, NlhCurve
from .fitting import (
    DegenerateFitError,
    _rel_grad,
    invert_information,
    newton_maximize,
    quad_form_inverse,
)
from .models import HazardModel, InadmissibleParameterError

__all__ = [
    "DiscreteFitError",
    "DiscreteModel",
    "ConstantDiscreteModel",
    "GroupedContinuousModel",
    "DiscreteFit",
    "DeltaPlot",
    "discrete_log_likelihood",
    "discrete_score",
    "fit_discrete",
    "sigma_discrete",
    "discrete_curve",
    "delta_plot",
    "discrete_model_from_id",
]


class DiscreteFitError(ValueError):
    """Fitted interval hazards reached 0 or 1."""


class DiscreteModel:
    """Parametric family of interval hazards ``h_i(theta)``."""

    name = "discrete"
    names: tuple[str, ...] = ()
    bounds: list[tuple[float, float]] = []

    @property
    def p(self) -> int:
        return len(self.names)

    def check(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.p,):
            raise InadmissibleParameterError(f"{self.name} expects {self.p} parameters")
        for v, nm, (lo, hi) in zip(theta, self.names, self.bounds):
            if not (np.isfinite(v) and lo < v < hi):
                raise InadmissibleParameterError(f"{self.name}: {nm}={v:g} outside ({lo:g}, {hi:g})")
        return theta

    def hazards(self, table: DiscreteTable, theta) -> tuple[np.ndarray, np.ndarray]:
        """``(h, h*)`` with shapes ``(k,)`` and ``(k, p)``."""
        raise NotImplementedError

    def log_survival_terms(self, table, theta):
        """``log(1 - h_i)``; overridden where a cancellation-free form exists."""
        h, _ = self.hazards(table, theta)
        return np.log1p(-h)

    # unconstrained coordinates, shared with the continuous models
    to_free = HazardModel.to_free
    from_free = HazardModel.from_free
    free_jacobian = HazardModel.free_jacobian

    def initial(self, table: DiscreteTable) -> np.ndarray:
        raise NotImplementedError


class ConstantDiscreteModel(DiscreteModel):
    """``h_i = theta`` for every interval, ``0 < theta < 1``."""

    name = "constant"
    names = ("theta",)
    bounds = [(0.0, 1.0)]

    def hazards(self, table, theta):
        theta = self.check(theta)
        return np.full(table.k, theta[0]), np.ones((table.k, 1))

    def initial(self, table):
        return np.array([table.events.sum() / table.at_risk.sum()])


class GroupedContinuousModel(DiscreteModel):
    """Continuous hazard model observed on the table's intervals.

    ``h_i = 1 - exp(-dH_i)`` and ``h*_i = (1 - h_i) dH*_i`` where ``dH`` is
    the cumulative-hazard increment over the interval.
    """

    def __init__(self, model: HazardModel):
        self.model = model
        self.name = f"grouped[{model.describe()}]"
        self.names = tuple(model.names)
        self.bounds = list(model.bounds)

    def increments(self, table, theta):
        theta = self.model.check(theta)
        dH = self.model._cum_hazard(table.right, theta) - self.model._cum_hazard(table.left, theta)
        dHs = self.model._cum_score(table.right, theta) - self.model._cum_score(table.left, theta)
        return dH, dHs

    def hazards(self, table, theta):
        dH, dHs = self.increments(table, theta)
        h = -np.expm1(-dH)
        return h, (1.0 - h)[:, None] * dHs

    def log_survival_terms(self, table, theta):
        return -self.increments(table, theta)[0]

    def initial(self, table):
        # seed the rate from the constant-hazard fit of the grouped data
        theta = np.array(self.model.initial(_pseudo_sample(table)), dtype=float)
        return theta


def _pseudo_sample(table: DiscreteTable):
    # midpoint imputation, used only to seed the optimizer
    from .data import SurvivalSample

    times, status = [], []
    Y = table.at_risk.astype(int)
    dN = table.events.astype(int)
    nxt = np.concatenate([Y[1:], [0]])
    for i in range(table.k):
        times += [0.5 * (table.left[i] + table.right[i])] * dN[i]
        status += [1] * dN[i]
        lost = max(Y[i] - dN[i] - nxt[i], 0)
        times += [table.right[i]] * lost
        status += [0] * lost
    if not times:
        times, status = [table.right[-1]], [0]
    return SurvivalSample.from_arrays(np.array(times), np.array(status))


def discrete_log_likelihood(model: DiscreteModel, theta, table: DiscreteTable) -> float:
    """``sum dN log h + (Y - dN) log(1 - h)``."""
    h, _ = model.hazards(table, theta)
    log1mh = model.log_survival_terms(table, theta)
    dN, Y = table.events, table.at_risk
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(dN > 0, dN * np.log(h), 0.0) + np.where(Y - dN > 0, (Y - dN) * log1mh, 0.0)
    return float(np.sum(terms))


def discrete_score(model: DiscreteModel, theta, table: DiscreteTable) -> np.ndarray:
    """``U(theta) = sum (dN - Y h) / (h (1 - h)) h*``."""
    h, hs = model.hazards(table, theta)
    live = table.at_risk > 0
    w = np.zeros_like(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        w[live] = (table.events[live] - table.at_risk[live] * h[live]) / (h[live] * (1.0 - h[live]))
    return w @ hs


def sigma_discrete(model: DiscreteModel, theta, table: DiscreteTable) -> np.ndarray:
    """``sum (Y_i/n) h*_i h*_i^T / (h_i (1 - h_i))``."""
    h, hs = model.hazards(table, theta)
    live = table.at_risk > 0
    r = table.at_risk[live] / table.n
    wts = r / (h[live] * (1.0 - h[live]))
    out = (hs[live] * wts[:, None]).T @ hs[live]
    return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class DiscreteFit:
    model: DiscreteModel
    theta: np.ndarray
    loglik: float
    sigma: np.ndarray
    table: DiscreteTable
    iterations: int
    converged: bool
    grad_norm: float

    @property
    def n(self) -> int:
        return self.table.n

    @property
    def names(self):
        return tuple(self.model.names)

    @property
    def cov(self) -> np.ndarray:
        return invert_information(self.sigma) / self.n

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def as_dict(self) -> dict:
        return {
            "model": self.model.name,
            "parameters": dict(zip(self.names, map(float, self.theta))),
            "std_errors": dict(zip(self.names, map(float, self.std_errors))),
            "loglik": self.loglik,
            "n": self.n,
            "intervals": self.table.k,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
        }


def fit_discrete(model: DiscreteModel, table: DiscreteTable, init=None) -> DiscreteFit:
    """ML fit of a discrete hazard model.

    The constant model uses ``theta = sum dN / sum Y``; other models run the
    safeguarded Newton iteration in unconstrained coordinates.

    Raises
    ------
    DiscreteFitError
        If a fitted hazard is numerically 0 or 1 in an interval with
        subjects at risk.
    """
    if table.events.sum() == 0:
        raise DegenerateFitError("degenerate fit: no events in the table")
    if isinstance(model, ConstantDiscreteModel):
        theta = model.initial(table)
        if not 0.0 < theta[0] < 1.0:
            raise DiscreteFitError("constant hazard estimate is 1: every subject at risk fails")
        it, converged = 0, True
        ll = discrete_log_likelihood(model, theta, table)
        g = discrete_score(model, theta, table) * model.free_jacobian(model.to_free(theta))
        eta = model.to_free(theta)
    else:
        theta0 = model.check(model.initial(table) if init is None else init)

        def objective(eta):
            try:
                val = discrete_log_likelihood(model, model.check(model.from_free(eta)), table)
            except InadmissibleParameterError:
                return -np.inf
            return val if np.isfinite(val) else -np.inf

        def gradient(eta):
            return discrete_score(model, model.from_free(eta), table) * model.free_jacobian(eta)

        def in_range(eta):
            return bool(np.all(np.isfinite(eta)) and np.all(np.abs(eta) * _scale(model, table) <= 30.0))

        eta, ll, g, it, converged = newton_maximize(objective, gradient, model.to_free(theta0), in_range)
        theta = model.from_free(eta)
    h, _ = model.hazards(table, theta)
    bad = np.flatnonzero((table.at_risk > 0) & ((h <= 0.0) | (h >= 1.0)))
    if bad.size:
        i = int(bad[0])
        raise DiscreteFitError(
            f"fitted hazard {h[i]:g} is degenerate in interval {i} ({table.left[i]:g}, {table.right[i]:g}]"
        )
    sigma = sigma_discrete(model, theta, table)
    return DiscreteFit(model, theta, ll, sigma, table, it, converged, _rel_grad(g, eta, ll))


def _scale(model, table):
    # unbounded shape parameters are judged on the table's time scale
    unbounded = np.array([not np.isfinite(lo) and not np.isfinite(hi) for lo, hi in model.bounds])
    return np.where(unbounded, table.right[-1] / 10.0, 1.0)


def discrete_curve(fit: DiscreteFit, plot: str = "B", weights=None) -> NlhCurve:
    """Discrete NLH curve at the right end of each interval.

    ``K_i = 1`` for Type A, ``Y_i/n`` for Type B, or explicit ``weights``.
    Intervals without subjects at risk contribute nothing.
    """
    table, theta, n = fit.table, fit.theta, fit.n
    h, hs = fit.model.hazards(table, theta)
    Y, dN = table.at_risk, table.events
    live = Y > 0
    if weights is not None:
        K = np.asarray(weights, dtype=float)
        plot = "custom"
    elif plot.upper() == "A":
        K = np.ones(table.k)
    elif plot.upper() == "B":
        K = Y / n
    else:
        raise ValueError(f"unknown plot type {plot!r}")
    K = np.where(live, K, 0.0)
    r = Y / n
    safe_Y = np.where(live, Y, 1.0)
    inc = np.where(live, K / safe_Y * (dN - Y * h), 0.0)
    d_n = math.sqrt(n) * np.cumsum(inc)
    lead = np.cumsum(np.where(live, K**2 / np.where(live, r, 1.0) * h * (1.0 - h), 0.0))
    C = np.cumsum(K[:, None] * hs, axis=0)
    kappa2 = lead - quad_form_inverse(fit.sigma, C)
    kappa = np.sqrt(np.maximum(kappa2, 0.0))
    ok = (lead > 0) & (kappa > KAPPA_FLOOR * np.sqrt(np.maximum(lead, 0.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        nlh = np.where(ok, d_n / kappa, np.nan)
    return NlhCurve(
        times=table.right.copy(),
        d_n=d_n,
        kappa=kappa,
        nlh=nlh,
        defined=ok,
        kappa2=kappa2,
        d_left=d_n,
        kappa_left=kappa,
        nlh_left=nlh,
        plot=plot.upper(),
        flavor="discrete",
        model=fit.model.name,
        theta=tuple(map(float, theta)),
        n=n,
    )


@dataclass(frozen=True, eq=False)
class DeltaPlot:
    """Standardized per-interval differences ``sqrt(n) (dN/Y - h) / w``."""

    midpoints: np.ndarray
    values: np.ndarray
    w: np.ndarray
    w2: np.ndarray
    defined: np.ndarray
    extra: dict = field(default_factory=dict)


def delta_plot(fit: DiscreteFit) -> DeltaPlot:
    """Per-interval residuals with ``w_i^2 = h(1-h)/r_i - h^2 psi^T Sigma^{-1} psi``."""
    table, theta, n = fit.table, fit.theta, fit.n
    h, hs = fit.model.hazards(table, theta)
    Y, dN = table.at_risk, table.events
    live = Y > 0
    r = np.where(live, Y / n, 1.0)
    lead = np.where(live, h * (1.0 - h) / r, 0.0)
    # h^2 psi psi^T = h* h*^T
    w2 = np.where(live, lead - quad_form_inverse(fit.sigma, hs), np.nan)
    w = np.where(live, np.sqrt(np.maximum(w2, 0.0)), 0.0)
    ok = live & (w > KAPPA_FLOOR * np.sqrt(lead))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(ok, math.sqrt(n) * (dN / np.where(live, Y, 1.0) - h) / w, np.nan)
    return DeltaPlot(table.midpoints, vals, w, w2, ok)


def discrete_model_from_id(model_id: str) -> DiscreteModel:
    """``constant`` or any continuous model id, grouped over the table intervals."""
    from .models import model_from_id

    if model_id == "constant":
        return ConstantDiscreteModel()
    return GroupedContinuousModel(model_from_id(model_id))
