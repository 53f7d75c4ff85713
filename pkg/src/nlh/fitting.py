"""Maximum-likelihood fitting for censored and left-truncated samples."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import optimize

from .data import NoEventsError, SurvivalSample
from .models import (
    HazardModel,
    InadmissibleParameterError,
    ProportionalModel,
    RestrictedModel,
)

__all__ = [
    "DegenerateFitError",
    "SingularInformationError",
    "FitResult",
    "log_likelihood",
    "score_vector",
    "fit_ml",
    "fit_profile",
    "fit_window",
    "sigma_parametric",
    "sigma_nonparametric",
    "window_sample",
]

GRAD_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 30
ETA_LIMIT = 30.0
# a log-parameter with 1e-12 of the leading information is not identified
FREE_PIVOT_RTOL = 1e-6
MAX_STEP = 5.0


class DegenerateFitError(RuntimeError):
    """The likelihood has no interior maximum."""


class SingularInformationError(np.linalg.LinAlgError):
    """An information matrix that must be inverted is singular."""


# ---------------------------------------------------------------------------
# Likelihood pieces


def log_likelihood(model: HazardModel, theta, sample: SurvivalSample) -> float:
    """``sum_j [status_j log h(t_j) - (H(t_j) - H(v_j))]``.

    Raises for an inadmissible ``theta`` rather than clamping.
    """
    theta = model.check(theta)
    ev = sample.status == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        total = float(np.sum(model._log_hazard(sample.time[ev], theta)))
        total -= float(np.sum(model._cum_hazard(sample.time, theta)))
        if sample.truncated:
            total += float(np.sum(model._cum_hazard(sample.entry, theta)))
    return total


def score_vector(model: HazardModel, theta, sample: SurvivalSample) -> np.ndarray:
    """Gradient of :func:`log_likelihood` in the natural parameters."""
    theta = model.check(theta)
    ev = sample.status == 1
    g = model._score(sample.time[ev], theta).sum(axis=0)
    g = g - model._cum_score(sample.time, theta).sum(axis=0)
    if sample.truncated:
        g = g + model._cum_score(sample.entry, theta).sum(axis=0)
    return g


def sigma_parametric(model: HazardModel, theta, sample: SurvivalSample, n: int | None = None):
    """``n^-1 sum_j int_{v_j}^{t_j} psi psi^T h ds``."""
    n = sample.n if n is None else n
    blocks = model.info_increments(sample.entry, sample.time, theta)
    return _symmetrize(blocks.sum(axis=0) / n)


def sigma_nonparametric(model: HazardModel, theta, sample: SurvivalSample, n: int | None = None):
    """``n^-1 sum_j status_j psi(t_j) psi(t_j)^T``."""
    n = sample.n if n is None else n
    psi = model.score(sample.time[sample.status == 1], theta)
    return _symmetrize(psi.T @ psi / n)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# Result type


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted parameters with both information estimates.

    ``sigma_pm`` is evaluated lazily since it needs quadrature for models
    without closed-form information integrals.  ``cov`` uses the model's
    default variance flavor.
    """

    model: HazardModel
    theta: np.ndarray
    loglik: float
    sample: SurvivalSample
    n: int
    iterations: int
    converged: bool
    grad_norm: float
    method: str
    window: tuple[float, float] | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.model.names)

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def flavor(self) -> str:
        return self.model.default_flavor

    @cached_property
    def sigma_pm(self) -> np.ndarray:
        return sigma_parametric(self.model, self.theta, self.sample, self.n)

    @cached_property
    def sigma_np(self) -> np.ndarray:
        return sigma_nonparametric(self.model, self.theta, self.sample, self.n)

    def sigma(self, flavor: str | None = None) -> np.ndarray:
        flavor = flavor or self.flavor
        if flavor not in ("pm", "np"):
            raise ValueError(f"unknown variance flavor {flavor!r}")
        return self.sigma_pm if flavor == "pm" else self.sigma_np

    @cached_property
    def cov(self) -> np.ndarray:
        return invert_information(self.sigma()) / self.n

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    # windowed fits with an indicator weight have K_w = J_w
    @property
    def j_w(self) -> np.ndarray:
        return self.sigma_pm

    @property
    def k_w(self) -> np.ndarray:
        return self.sigma_pm

    def as_dict(self) -> dict:
        out = {
            "model": self.model.describe(),
            "parameters": dict(zip(self.names, map(float, self.theta))),
            "loglik": self.loglik,
            "n": self.n,
            "events": int(self.sample.n_events),
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "variance_flavor": self.flavor,
        }
        if self.p:
            out["std_errors"] = dict(zip(self.names, map(float, self.std_errors)))
        if self.window is not None:
            out["window"] = list(self.window)
        return out


def information_cholesky(sigma: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor of an information matrix.

    Raises
    ------
    SingularInformationError
        If the matrix is indefinite, or a Cholesky pivot is below ``rtol``
        times the largest one.
    """
    try:
        c = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise SingularInformationError("information matrix is singular or indefinite") from None
    d = np.abs(np.diag(c))
    if np.min(d) <= rtol * np.max(d):
        raise SingularInformationError("information matrix is numerically singular")
    return c


def quad_form_inverse(sigma: np.ndarray, c: np.ndarray, scale=None) -> np.ndarray:
    """Row-wise ``c^T Sigma^{-1} c`` for ``c`` of shape ``(m, p)``.

    ``scale`` is ``d theta / d eta`` for a reparametrization ``eta``.  The
    form is invariant under it, but the singularity check is not: in
    logarithmic coordinates the information is dimensionless, so a
    parameter whose information has collapsed shows up as a tiny pivot, and
    the stricter ``FREE_PIVOT_RTOL`` applies.  That happens when a fit runs
    onto a bound of the parameter space, where the score need not vanish or
    another parameter drops out.  Both coordinate systems must pass.
    """
    if sigma.size == 0:
        return np.zeros(c.shape[0])
    if scale is not None:
        information_cholesky(sigma)
        scale = np.asarray(scale, dtype=float)
        sigma = sigma * np.outer(scale, scale)
        c = c * scale
        try:
            factor = information_cholesky(sigma, FREE_PIVOT_RTOL)
        except SingularInformationError:
            raise SingularInformationError(
                "fit lies on the boundary of the parameter space; the information is degenerate there"
            ) from None
    else:
        factor = information_cholesky(sigma)
    z = np.linalg.solve(factor, c.T)
    return np.sum(z * z, axis=0)


def invert_information(sigma: np.ndarray) -> np.ndarray:
    """Inverse of a positive definite information matrix (no pseudo-inverse)."""
    if sigma.size == 0:
        return sigma.copy()
    ci = np.linalg.inv(information_cholesky(sigma))
    return ci.T @ ci


# ---------------------------------------------------------------------------
# Fitting


def _rate_only(model: HazardModel):
    """Proportional model whose only free parameter is the rate, else None."""
    if isinstance(model, ProportionalModel) and model.p == 1:
        return model, np.zeros(0)
    if (
        isinstance(model, RestrictedModel)
        and isinstance(model.full, ProportionalModel)
        and model.names == ("theta",)
    ):
        return model.full, model.expand([1.0])[1:]
    return None


def _prepare(model: HazardModel, sample: SurvivalSample, adapt: bool = True) -> HazardModel:
    if sample.n_events == 0:
        raise NoEventsError()
    if adapt:
        model = model.for_sample(sample)
    if model.p >= 2 and sample.n_events < model.p:
        warnings.warn(
            f"{sample.n_events} event(s) for {model.p} parameters; the fit may be degenerate",
            stacklevel=3,
        )
    return model


def fit_ml(
    model: HazardModel,
    sample: SurvivalSample,
    init=None,
    *,
    n: int | None = None,
    window: tuple[float, float] | None = None,
    adapt: bool = True,
) -> FitResult:
    """Maximum-likelihood fit.

    Rate-only proportional models (the exponential in particular) use the
    closed form ``theta = N / int Y h0 ds``.  Everything else runs Newton's
    method in the unconstrained parametrization with an analytic gradient,
    a central-difference Hessian and step halving.

    Raises
    ------
    DegenerateFitError
        When the iterates run off to the boundary of the parameter space.
    """
    model = _prepare(model, sample, adapt)
    n = sample.n if n is None else n
    if model.p == 0:
        return FitResult(model, np.zeros(0), log_likelihood(model, [], sample), sample, n, 0, True, 0.0, "fixed", window)
    rate = _rate_only(model)
    if rate is not None:
        prop, beta = rate
        theta = np.array([prop.profile_rate(sample, beta)])
        ll = log_likelihood(model, theta, sample)
        g = score_vector(model, theta, sample)
        return FitResult(model, theta, ll, sample, n, 0, True, _rel_grad(g * theta, np.log(theta), ll), "closed-form", window)

    theta0 = model.check(model.initial(sample) if init is None else init)
    return _newton(model, sample, theta0, n, window)


def _rel_grad(g_eta, eta, ll) -> float:
    return float(np.max(np.abs(g_eta) * np.maximum(np.abs(eta), 1.0)) / max(abs(ll), 1.0))


def newton_maximize(objective, gradient, eta0, in_range):
    """Safeguarded Newton ascent.

    Uses a central-difference Hessian of ``gradient``, eigenvalue flooring
    so every step ascends, a cap on the step length and step halving.

    Returns
    -------
    eta, value, grad, iterations, converged
    """
    eta = np.asarray(eta0, dtype=float)
    ll = objective(eta)
    if not np.isfinite(ll):
        raise DegenerateFitError("degenerate fit: log-likelihood not finite at the starting value")
    g = gradient(eta)
    it = 0
    while it < MAX_ITER and _rel_grad(g, eta, ll) >= GRAD_TOL:
        it += 1
        step = _ascent_step(_fd_hessian(gradient, eta), g)
        length = float(np.max(np.abs(step)))
        if length > MAX_STEP:
            step = step * (MAX_STEP / length)
        for _ in range(MAX_HALVINGS):
            cand = eta + step
            ll_c = objective(cand) if np.all(np.isfinite(cand)) else -np.inf
            if ll_c >= ll - 1e-12 * max(abs(ll), 1.0):
                break
            step = step / 2.0
        else:
            break
        eta, ll = cand, ll_c
        if not in_range(eta):
            raise DegenerateFitError("degenerate fit: parameters diverge to the boundary")
        g = gradient(eta)
    return eta, ll, g, it, _rel_grad(g, eta, ll) < GRAD_TOL


def _newton(model, sample, theta0, n, window) -> FitResult:
    t_scale = float(np.max(sample.time))
    unbounded = np.array([not np.isfinite(lo) and not np.isfinite(hi) for lo, hi in model.bounds])

    def objective(eta):
        try:
            theta = model.check(model.from_free(eta))
        except InadmissibleParameterError:
            return -np.inf
        ll = log_likelihood(model, theta, sample)
        return ll if np.isfinite(ll) else -np.inf

    def gradient(eta):
        theta = model.from_free(eta)
        return score_vector(model, theta, sample) * model.free_jacobian(eta)

    def in_range(eta):
        # shape parameters on the real line are judged on the data's time scale
        scaled = np.where(unbounded, np.abs(eta) * t_scale / 10.0, np.abs(eta))
        return bool(np.all(np.isfinite(eta)) and np.all(scaled <= ETA_LIMIT))

    eta, ll, g, it, converged = newton_maximize(objective, gradient, model.to_free(theta0), in_range)
    theta = model.from_free(eta)
    return FitResult(model, theta, ll, sample, n, it, converged, _rel_grad(g, eta, ll), "newton", window)


def _fd_hessian(gradient, eta) -> np.ndarray:
    p = eta.size
    hess = np.empty((p, p))
    for i in range(p):
        h = 1e-5 * max(1.0, abs(eta[i]))
        up, down = eta.copy(), eta.copy()
        up[i] += h
        down[i] -= h
        hess[:, i] = (gradient(up) - gradient(down)) / (2.0 * h)
    return _symmetrize(hess)


def _ascent_step(hess: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Newton step on -hess with eigenvalues floored so the step always ascends
    vals, vecs = np.linalg.eigh(-hess)
    top = max(float(np.max(np.abs(vals))), 1e-300)
    vals = np.maximum(vals, 1e-10 * top)
    return vecs @ ((vecs.T @ g) / vals)


def fit_profile(model: ProportionalModel, sample: SurvivalSample) -> FitResult:
    """Profile-likelihood fit for ``theta h0(s, beta)`` with scalar ``beta``.

    ``theta(beta) = N / int Y h0 ds`` is profiled out; the remaining
    one-dimensional problem is solved by bounded Brent search (golden
    section with parabolic steps) in the unconstrained coordinate.
    """
    model = _prepare(model, sample)
    if _rate_only(model) is not None:
        return fit_ml(model, sample)
    if not isinstance(model, ProportionalModel) or model.p != 2:
        raise ValueError("profile fitting needs a proportional model with one shape parameter")
    base = model.baseline
    lo_b, hi_b = base.bounds[0]
    ev = sample.status == 1
    n_ev = sample.n_events
    t_ev = sample.time[ev]

    def to_beta(u):
        if np.isfinite(lo_b):
            return lo_b + math.exp(u)
        return u

    def neg_profile(u):
        beta = np.array([to_beta(u)])
        if not lo_b < beta[0] < hi_b:
            return np.inf
        with np.errstate(all="ignore"):
            exposure = np.sum(base.H0(sample.time, beta) - base.H0(sample.entry, beta))
            val = n_ev * np.log(n_ev / exposure) + np.sum(base.log_h0(t_ev, beta)) - n_ev
        return -val if np.isfinite(val) else np.inf

    seed = model.to_free(model.initial(sample))[1]
    if np.isfinite(lo_b):
        lo_u, hi_u = seed - 15.0, seed + 15.0
    else:
        width = 50.0 / float(np.max(sample.time))
        lo_u, hi_u = seed - width, seed + width
    res = optimize.minimize_scalar(
        neg_profile, bounds=(lo_u, hi_u), method="bounded", options={"xatol": 1e-11, "maxiter": 500}
    )
    span = hi_u - lo_u
    # an optimum next to the bracket end or to an overflow edge is a boundary one
    near = 1e-3 * span
    at_edge = not (np.isfinite(neg_profile(res.x - near)) and np.isfinite(neg_profile(res.x + near)))
    if not res.success or at_edge or min(res.x - lo_u, hi_u - res.x) < near:
        raise DegenerateFitError("degenerate fit: profile likelihood is monotone")
    beta = np.array([to_beta(res.x)])
    theta = np.concatenate([[model.profile_rate(sample, beta)], beta])
    # polish the profile optimum with Newton so both routes share one criterion
    return replace(_newton(model, sample, theta, sample.n, None), method="profile")


# ---------------------------------------------------------------------------
# Window fits


def window_sample(sample: SurvivalSample, a: float, b: float) -> SurvivalSample:
    """Data restricted to ``[a, b]``: exposure clipped, events kept in ``(a, b]``."""
    if not 0.0 <= a < b:
        raise ValueError("window needs 0 <= a < b")
    entry = np.maximum(sample.entry, a)
    exit_ = np.minimum(sample.time, b)
    keep = exit_ > entry
    status = (sample.status == 1) & (sample.time > a) & (sample.time <= b)
    if not np.any(status & keep):
        raise NoEventsError("no events inside the window")
    cov = sample.covariates[keep] if sample.p_z else None
    return SurvivalSample.from_arrays(exit_[keep], status[keep].astype(int), entry[keep], cov, tau=min(b, sample.tau))


def fit_window(model: HazardModel, sample: SurvivalSample, window: tuple[float, float], init=None) -> FitResult:
    """Fit using only the data inside ``window = (a, b)``.

    Information matrices keep the full-sample ``n`` as normalizer so that
    ``fit.sigma_pm`` is the window information ``J_w``.
    """
    a, b = map(float, window)
    if b > sample.tau:
        raise ValueError("window extends beyond tau")
    sub = window_sample(sample, a, b)
    model = model.for_sample(sample)
    return fit_ml(model, sub, init, n=sample.n, window=(a, b), adapt=False)
