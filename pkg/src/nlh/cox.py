"""Parametric proportional hazards regression with a constant baseline.

Subject ``j`` has hazard ``theta * exp(beta^T z_j)`` with time-fixed
covariates.  The model is fitted by Newton's method in
``(log theta, beta)``, where the log-likelihood is concave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import NoEventsError, SurvivalSample, build_risk_path
from .engine import KAPPA_FLOOR, NlhCurve
from .fitting import GRAD_TOL, MAX_HALVINGS, MAX_ITER, _rel_grad, invert_information, quad_form_inverse

__all__ = ["CoxFit", "RiskAverages", "fit_cox_exponential", "risk_averages", "cox_curve", "cox_curve_type_a", "cox_curve_type_b"]

_DIVERGED = 30.0
STEP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CoxFit:
    """Fit of ``theta exp(beta^T z)``.

    ``sigma`` is the information estimate in ``(theta, beta)`` coordinates,
    assembled from its rate/rate, covariate/rate and covariate/covariate
    blocks.  When ``beta`` is held fixed only the rate block is kept.
    """

    theta: float
    beta: np.ndarray
    sigma: np.ndarray
    loglik: float
    sample: SurvivalSample
    iterations: int
    converged: bool
    grad_norm: float
    beta_fixed: bool = False

    @property
    def n(self) -> int:
        return self.sample.n

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.theta], self.beta])

    @property
    def names(self) -> tuple[str, ...]:
        return ("theta",) + tuple(f"beta{i + 1}" for i in range(self.beta.size))

    @property
    def cov(self) -> np.ndarray:
        return invert_information(self.sigma) / self.n

    @property
    def std_errors(self) -> np.ndarray:
        se = np.sqrt(np.diag(self.cov))
        if self.beta_fixed:
            return np.concatenate([se, np.zeros(self.beta.size)])
        return se

    def as_dict(self) -> dict:
        return {
            "model": "cox-exponential",
            "parameters": dict(zip(self.names, map(float, self.params))),
            "std_errors": dict(zip(self.names, map(float, self.std_errors))),
            "loglik": self.loglik,
            "n": self.n,
            "events": int(self.sample.n_events),
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "beta_fixed": self.beta_fixed,
        }


def _design(sample: SurvivalSample) -> np.ndarray:
    return np.column_stack([np.ones(sample.n), sample.covariates])


def fit_cox_exponential(sample: SurvivalSample, fix_beta=None) -> CoxFit:
    """ML fit of the constant-baseline proportional hazards model.

    Parameters
    ----------
    fix_beta : array_like, optional
        Hold the regression coefficients at these values and fit only the
        rate, which then has the closed form ``N / sum exp(beta^T z) (t - v)``.

    Non-convergence (for instance under separation) is reported through
    ``converged`` rather than raised.
    """
    if sample.n_events == 0:
        raise NoEventsError()
    X = _design(sample)
    d = sample.status.astype(float)
    expo = sample.time - sample.entry
    p = X.shape[1]

    if fix_beta is not None:
        beta = np.broadcast_to(np.asarray(fix_beta, dtype=float), (p - 1,)).copy()
        w = np.exp(sample.covariates @ beta) * expo
        theta = d.sum() / w.sum()
        ll = float(np.sum(d * (math.log(theta) + sample.covariates @ beta)) - theta * w.sum())
        sigma = np.array([[w.sum() / theta / sample.n]])
        return CoxFit(theta, beta, sigma, ll, sample, 0, True, 0.0, beta_fixed=True)

    def loglik(g):
        eta = X @ g
        return float(d @ eta - np.sum(np.exp(eta) * expo))

    g = np.zeros(p)
    g[0] = math.log(d.sum() / expo.sum())
    ll = loglik(g)
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        mu = np.exp(X @ g) * expo
        grad = X.T @ (d - mu)
        info = (X * mu[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            break
        # under separation the gradient fades while the Newton step stays near one
        if _rel_grad(grad, g, ll) < GRAD_TOL and np.max(np.abs(step)) < STEP_TOL:
            converged = True
            it -= 1
            break
        for _ in range(MAX_HALVINGS):
            cand = g + step
            ll_c = loglik(cand) if np.all(np.abs(cand) < 700) else -np.inf
            if ll_c >= ll - 1e-12 * max(abs(ll), 1.0):
                break
            step = step / 2.0
        else:
            break
        g, ll = cand, ll_c
        if np.max(np.abs(g[1:]), initial=0.0) > _DIVERGED:
            break
    mu = np.exp(X @ g) * expo
    grad = X.T @ (d - mu)
    grad_norm = _rel_grad(grad, g, ll)
    theta, beta = math.exp(g[0]), g[1:].copy()
    sigma = cox_sigma(sample, theta, beta)
    return CoxFit(theta, beta, sigma, ll, sample, it, converged, grad_norm)


def cox_sigma(sample: SurvivalSample, theta: float, beta: np.ndarray) -> np.ndarray:
    """Information blocks in ``(theta, beta)`` coordinates."""
    z = sample.covariates
    w = np.exp(z @ beta) * (sample.time - sample.entry)
    n = sample.n
    s11 = w.sum() / theta / n
    s21 = z.T @ w / n
    s22 = theta * (z * w[:, None]).T @ z / n
    top = np.concatenate([[s11], s21])
    bottom = np.column_stack([s21, s22])
    out = np.vstack([top, bottom])
    return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class RiskAverages:
    """``R``, ``R1`` and ``E = R1/R`` on the gaps ``(edges[k], edges[k+1]]``."""

    edges: np.ndarray
    R: np.ndarray
    R1: np.ndarray

    @property
    def E(self) -> np.ndarray:
        out = np.zeros_like(self.R1)
        pos = self.R > 0
        out[pos] = self.R1[pos] / self.R[pos, None]
        return out

    def at(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Left-continuous ``(R(s), R1(s))``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.searchsorted(self.edges, s, side="left") - 1
        inside = (k >= 0) & (k < self.R.size)
        kk = np.clip(k, 0, self.R.size - 1)
        return np.where(inside, self.R[kk], 0.0), np.where(inside[:, None], self.R1[kk], 0.0)


def risk_averages(sample: SurvivalSample, beta) -> RiskAverages:
    beta = np.asarray(beta, dtype=float)
    path = build_risk_path(sample)
    edges = path.edges
    r = np.exp(sample.covariates @ beta)
    start = np.searchsorted(edges, sample.entry)
    stop = np.searchsorted(edges, sample.time)
    diff = np.zeros(edges.size)
    diff1 = np.zeros((edges.size, sample.p_z))
    np.add.at(diff, start, r)
    np.add.at(diff, stop, -r)
    np.add.at(diff1, start, sample.covariates * r[:, None])
    np.add.at(diff1, stop, -sample.covariates * r[:, None])
    R = np.cumsum(diff)[:-1] / sample.n
    R1 = np.cumsum(diff1, axis=0)[:-1] / sample.n
    R = np.where(path.gap_risk > 0, R, 0.0)
    return RiskAverages(edges, R, R1)


def cox_curve(fit: CoxFit, plot: str = "A") -> NlhCurve:
    """Type A or B curve for the constant-baseline regression model.

    All integrals are finite sums since ``R`` and ``R1`` are constant
    between consecutive entry/exit times.
    """
    plot = plot.upper()
    if plot not in ("A", "B"):
        raise ValueError("regression curves are of Type A or B")
    sample, theta, n = fit.sample, fit.theta, fit.n
    path = build_risk_path(sample)
    ra = risk_averages(sample, fit.beta)
    edges, R, R1 = ra.edges, ra.R, ra.R1
    width = np.diff(edges)
    live = R > 0
    u, dN = path.event_times, path.events.astype(float)
    k_ev = np.searchsorted(edges, u)

    def cum(gap_values):
        c = np.concatenate([np.zeros((1,) + gap_values.shape[1:]), np.cumsum(gap_values, axis=0)])
        return c[k_ev]

    R_u = ra.at(u)[0]
    if plot == "A":
        jump = math.sqrt(n) * dN / (n * R_u)
        d_n = np.cumsum(jump) - math.sqrt(n) * theta * cum(live * width)
        lead = cum(np.where(live, theta / np.where(live, R, 1.0), 0.0) * width)
        C = np.column_stack([cum(live * width), theta * cum(ra.E * width[:, None])])
    else:
        jump = dN / math.sqrt(n)
        d_n = np.cumsum(jump) - math.sqrt(n) * theta * cum(R * width)
        lead = theta * cum(R * width)
        C = np.column_stack([cum(R * width), theta * cum(R1 * width[:, None])])
    if fit.beta_fixed:
        C = C[:, :1]
    kappa2 = lead - quad_form_inverse(fit.sigma, C)
    kappa = np.sqrt(np.maximum(kappa2, 0.0))
    ok = (lead > 0) & (kappa > KAPPA_FLOOR * np.sqrt(np.maximum(lead, 0.0)))
    d_left = d_n - jump
    with np.errstate(divide="ignore", invalid="ignore"):
        nlh = np.where(ok, d_n / kappa, np.nan)
        nlh_left = np.where(ok, d_left / kappa, np.nan)
    return NlhCurve(
        times=u,
        d_n=d_n,
        kappa=kappa,
        nlh=nlh,
        defined=ok,
        kappa2=kappa2,
        d_left=d_left,
        kappa_left=kappa,
        nlh_left=nlh_left,
        plot=plot,
        flavor="pm",
        model="cox-exponential",
        theta=tuple(map(float, fit.params)),
        n=n,
    )


def cox_curve_type_a(fit: CoxFit) -> NlhCurve:
    return cox_curve(fit, "A")


def cox_curve_type_b(fit: CoxFit) -> NlhCurve:
    return cox_curve(fit, "B")
