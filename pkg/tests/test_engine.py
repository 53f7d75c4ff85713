from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from conftest import model_sample
from nlh.data import SurvivalSample, build_risk_path
from nlh.engine import (
    DeterministicWeight,
    LogMinusPhiHat,
    OneMinusThetaS,
    OptimalAgainst,
    TabulatedWeight,
    curve_fixed,
    curve_type_a,
    curve_type_b,
    curve_type_c,
    curve_windowed,
    nlh_curve,
    phi_hat,
)
from nlh.fitting import SingularInformationError, fit_ml
from nlh.models import (
    exponential_model,
    fixed_model,
    gamma_model,
    gompertz_model,
    simple_frailty_model,
    weibull_model,
)
from oracles import kappa2_by_quadrature, nelson_aalen_by_count


def _exp_fit(seed=1, n=60, censor_rate=0.5):
    return fit_ml(exponential_model(), model_sample(exponential_model(), (1.0,), n, seed, censor_rate))


class TestCurveContainer:
    def test_shapes_and_metadata(self):
        c = curve_type_a(_exp_fit())
        assert len(c) == c.d_n.size == c.kappa.size == c.nlh.size == c.defined.size
        meta = c.metadata()
        assert meta["plot"] == "A"
        assert meta["flavor"] == "pm"
        assert meta["model"] == "exponential"
        assert meta["band_level"] == 1.96
        assert np.all(np.isfinite(c.nlh[c.defined]))
        assert np.all(np.isnan(c.nlh[~c.defined]))

    def test_rows_and_interpolation(self):
        c = curve_type_b(_exp_fit())
        rows = list(c.rows())
        assert len(rows) == len(c)
        ok = np.flatnonzero(c.defined)
        i, j = ok[3], ok[4]
        mid = 0.5 * (c.times[i] + c.times[j])
        assert c.at(mid) == pytest.approx(0.5 * (c.nlh[i] + c.nlh[j]))

    def test_max_abs_includes_left_limits(self):
        c = curve_type_a(_exp_fit())
        assert c.max_abs() >= c.max_abs(include_left=False)
        assert c.max_abs() == pytest.approx(np.nanmax(np.abs(np.concatenate([c.nlh, c.nlh_left]))))

    def test_unknown_plot(self):
        with pytest.raises(ValueError):
            nlh_curve(_exp_fit(), "D")

    def test_type_c_needs_weight(self):
        with pytest.raises(ValueError):
            nlh_curve(_exp_fit(), "C")


class TestTypeA:
    def test_d_n_matches_raw_counts(self):
        fit = _exp_fit()
        c = curve_type_a(fit)
        s = fit.sample
        for t, d in list(zip(c.times, c.d_n))[::7]:
            y_int = integrate.quad(lambda u: float(np.sum((s.entry < u) & (s.time >= u)) > 0), 0, t, limit=500, points=s.time[s.time < t])[0]
            ref = math.sqrt(s.n) * (nelson_aalen_by_count(s, t) - fit.theta[0] * y_int)
            assert d == pytest.approx(ref, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize(
        "model, truth",
        [
            (exponential_model(), (1.3,)),
            (weibull_model(), (1.0, 1.4)),
            (gompertz_model(), (0.7, 0.5)),
            (simple_frailty_model(), (1.2, 0.6)),
        ],
    )
    @pytest.mark.parametrize("plot", ["A", "B"])
    def test_kappa2_against_quadrature(self, model, truth, plot):
        s = model_sample(model, truth, 20, 31, censor_rate=0.4)
        fit = fit_ml(model, s)
        c = nlh_curve(fit, plot, "pm")
        ref = kappa2_by_quadrature(fit.model, fit.theta, s, s.n, plot, c.times)
        assert_allclose(c.kappa2, ref, rtol=1e-8, atol=1e-12 * np.max(np.abs(ref)))

    def test_nonparametric_hand_values(self):
        s = SurvivalSample.from_arrays([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 1])
        fit = fit_ml(exponential_model(), s)
        c = curve_type_a(fit, "np")
        th, n = fit.theta[0], 4
        Y = np.array([4, 3, 1])
        na = np.cumsum(1 / Y)
        lead = np.cumsum(n / Y**2)
        sigma = 3 / th**2 / n
        assert_allclose(c.kappa2, lead - (na / th) ** 2 / sigma, rtol=1e-12)


class TestTypeB:
    @pytest.mark.parametrize(
        "model, truth",
        [
            (exponential_model(), (1.3,)),
            (weibull_model(), (1.0, 1.4)),
            (gompertz_model(), (0.7, 0.5)),
            (simple_frailty_model(), (1.2, 0.6)),
        ],
    )
    def test_ends_at_zero(self, model, truth):
        s = model_sample(model, truth, 150, 32)
        fit = fit_ml(model, s)
        c = curve_type_b(fit)
        assert abs(c.d_n[-1]) < 1e-8 * math.sqrt(s.n)

    def test_observed_minus_expected(self):
        fit = _exp_fit()
        s = fit.sample
        c = curve_type_b(fit)
        for t, d in list(zip(c.times, c.d_n))[::5]:
            expected = fit.theta[0] * np.sum(np.minimum(s.time, t) - np.minimum(s.entry, t))
            observed = np.sum((s.status == 1) & (s.time <= t))
            assert d == pytest.approx((observed - expected) / math.sqrt(s.n), abs=1e-12)

    def test_frailty_data_lie_above_axis(self):
        from nlh.power import FrailtyContamination, simulate_sample

        s = simulate_sample(FrailtyContamination(0.5, 1.0), 3000, 5)
        c = curve_type_b(fit_ml(exponential_model(), s))
        late = c.times > np.quantile(c.times, 0.2)
        inner = late & (c.times < np.quantile(c.times, 0.9))
        assert np.all(c.d_n[inner] > 0)


class TestTypeC:
    def test_unit_weight_is_type_b(self):
        fit = _exp_fit()
        b = curve_type_b(fit)
        for w in (TabulatedWeight([0.0], [1.0]), DeterministicWeight(lambda s: np.ones_like(s), _unit_prims)):
            c = curve_type_c(fit, w)
            assert_allclose(c.d_n, b.d_n, atol=1e-13)
            assert_allclose(c.kappa2, b.kappa2, rtol=1e-12, atol=1e-14)
        assert_allclose(curve_type_c(fit, TabulatedWeight([0.0], [1.0]), "np").nlh, curve_type_b(fit, "np").nlh, rtol=1e-12)

    def test_score_weight_starts_and_ends_at_zero(self):
        s = model_sample(exponential_model(), (1.0,), 80, 3)
        fit = fit_ml(exponential_model(), s)
        c = curve_type_c(fit, TabulatedWeight([0.0], [1.0 / fit.theta[0]]))
        assert abs(c.d_n[-1]) < 1e-12

    def test_phi_hat_hand_value(self):
        s = SurvivalSample.from_arrays([1.0, math.e], [1, 1])
        assert phi_hat(s) == pytest.approx(-1.0 / (1.0 + math.e))

    def test_log_weight_against_quadrature(self):
        fit = _exp_fit(seed=4, n=25)
        c = curve_type_c(fit, LogMinusPhiHat())
        phi = phi_hat(fit.sample)
        th, n, s = fit.theta[0], fit.sample.n, fit.sample
        path = build_risk_path(s)
        for k in (3, 10, len(c) - 1):
            t = c.times[k]
            lead = C = 0.0
            for a, b, y in zip(path.edges[:-1], path.edges[1:], path.gap_risk):
                if a >= t:
                    break
                lead += y / n * integrate.quad(lambda u: (math.log(u) - phi) ** 2 * th, a, b, epsrel=1e-13)[0]
                C += y / n * integrate.quad(lambda u: (math.log(u) - phi), a, b, epsrel=1e-13)[0]
            ref = lead - C * C / fit.sigma_pm[0, 0]
            assert c.kappa2[k] == pytest.approx(ref, rel=1e-9)
        assert c.extra["weight"] == "log"

    def test_optimal_weight_against_weibull_is_log_weight(self):
        fit = _exp_fit(seed=5, n=40)
        opt = OptimalAgainst(lambda s, th: 1.0 + np.log(s)).bind(fit.model, fit.theta, fit.sample, fit, "pm")
        log = LogMinusPhiHat().bind(fit.model, fit.theta, fit.sample, fit, "pm")
        grid = np.linspace(0.05, 3.0, 30)
        assert_allclose(opt.values(grid), log.values(grid), rtol=1e-9, atol=1e-10)

    def test_frailty_weight(self):
        fit = _exp_fit()
        c = curve_type_c(fit, OneMinusThetaS())
        assert c.flavor == "pm"
        assert c.extra["weight"] == "frailty"
        assert np.all(c.kappa2 >= -1e-12)

    def test_missing_primitives_fall_back_to_np(self):
        fit = fit_ml(weibull_model(), model_sample(weibull_model(), (1.0, 1.3), 60, 2))
        with pytest.warns(UserWarning, match="nonparametric"):
            c = curve_type_c(fit, LogMinusPhiHat(), "pm")
        assert c.flavor == "np"

    def test_tabulated_weight_any_model(self):
        fit = fit_ml(weibull_model(), model_sample(weibull_model(), (1.0, 1.3), 60, 2))
        c = curve_type_c(fit, TabulatedWeight([0.0, 0.5], [1.0, -1.0]), "pm")
        assert c.flavor == "pm"
        assert np.all(c.kappa2 >= -1e-12)


def _unit_prims(s, model, theta):
    return model._cum_hazard(s, theta), model._cum_hazard(s, theta), model._cum_score(s, theta)


class TestFixed:
    def test_single_event_hand_value(self):
        s = SurvivalSample.from_arrays([0.5], [1])
        c = curve_fixed(fixed_model(lambda u: np.ones_like(u), lambda t: t), s, "A")
        assert c.d_n[0] == pytest.approx(0.5)
        assert c.kappa2[0] == pytest.approx(0.5)
        assert c.nlh[0] == pytest.approx(0.5 / math.sqrt(0.5))

    def test_wrong_hazard_drifts_negative(self):
        s = model_sample(exponential_model(), (1.0,), 2000, 9)
        c = curve_fixed(fixed_model(lambda u: np.full_like(u, 2.0), lambda t: 2.0 * t), s, "B")
        deciles = c.d_n[np.linspace(0, len(c) - 1, 11).astype(int)[1:]]
        assert np.all(np.diff(deciles) < 0)
        assert c.nlh[-1] < -10

    def test_needs_fixed_model(self):
        with pytest.raises(ValueError):
            curve_fixed(exponential_model(), SurvivalSample.from_arrays([0.5], [1]))


class TestWindowed:
    def test_full_window_reproduces_curve(self):
        s = model_sample(weibull_model(), (1.0, 1.4), 120, 21, censor_rate=0.3)
        full = curve_type_a(fit_ml(weibull_model(), s))
        win = curve_windowed(weibull_model(), s, (0.0, s.tau), "A")
        assert_allclose(win.nlh, full.nlh, rtol=1e-7, atol=1e-10)

    def test_constant_hazard_display(self):
        s = model_sample(exponential_model(), (1.0,), 200, 22, censor_rate=0.3)
        a, b = 0.3, 1.5
        c = curve_windowed(exponential_model(), s, (a, b), "A")
        n = s.n

        def y(u):
            return np.sum((s.entry < u) & (s.time >= u)) / n

        knots = np.unique(np.concatenate([[a, b], s.time[(s.time > a) & (s.time < b)]]))
        mids = 0.5 * (knots[:-1] + knots[1:])
        yk = np.array([y(m) for m in mids])
        events = np.sum((s.status == 1) & (s.time > a) & (s.time <= b))
        theta = events / (n * np.sum(yk * np.diff(knots)))
        total_y = np.sum(yk * np.diff(knots))
        assert c.theta[0] == pytest.approx(theta, rel=1e-12)
        for k in range(5, len(c), 17):
            t = c.times[k]
            gaps = knots[1:] <= t
            lead = np.sum(theta / yk[gaps] * np.diff(knots)[gaps])
            kappa2 = lead - theta * (t - a) ** 2 / total_y
            d = math.sqrt(n) * (nelson_aalen_by_count(s, t) - nelson_aalen_by_count(s, a) - theta * (t - a))
            assert c.kappa2[k] == pytest.approx(kappa2, rel=1e-10)
            assert c.d_n[k] == pytest.approx(d, rel=1e-9, abs=1e-12)

    def test_window_curve_lives_in_window(self):
        s = model_sample(exponential_model(), (1.0,), 200, 23)
        c = curve_windowed(exponential_model(), s, (0.4, 1.2), "B")
        assert c.times.min() > 0.4 and c.times.max() <= 1.2
        assert c.window == (0.4, 1.2)
        assert c.n == s.n


class TestDrift:
    def test_weibull_truth_against_exponential(self):
        s = model_sample(weibull_model(), (1.0, 1.5), 5000, 41)
        c = curve_type_a(fit_ml(exponential_model(), s))
        q = np.quantile(c.times, [0.02, 0.98])
        sel = (c.times > q[0]) & (c.times < q[1])
        drift = c.d_n[sel] / math.sqrt(s.n)
        i = int(np.argmin(drift))
        assert 0.1 * drift.size < i < 0.9 * drift.size
        assert drift[0] - drift[i] > 0.05
        assert drift[-1] - drift[i] > 0.05


MODELS = [
    (exponential_model(), (1.0,)),
    (weibull_model(), (1.0, 1.3)),
    (gompertz_model(), (0.8, 0.3)),
    (simple_frailty_model(), (1.0, 0.4)),
    (gamma_model(), (1.5, 1.2)),
]


class TestPositivity:
    def test_boundary_fit_has_no_curve(self):
        from nlh.power import Censoring, FixedHazard, simulate_sample

        # this sample's frailty fit runs onto the lower bound of beta
        s = simulate_sample(FixedHazard(simple_frailty_model(), (1.0, 0.4)), 30, 105, Censoring("exponential", 0.5))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_ml(simple_frailty_model(), s)
        assert fit.theta[1] - fit.model.bounds[1][0] < 1e-6
        with pytest.raises(SingularInformationError, match="boundary"):
            nlh_curve(fit, "A", "pm")

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(
        st.integers(0, len(MODELS) - 1),
        st.sampled_from(["A", "B"]),
        st.sampled_from(["pm", "np"]),
        st.integers(0, 2**31 - 1),
        st.booleans(),
    )
    def test_kappa2_nonnegative(self, idx, plot, flavor, seed, trunc):
        from nlh.power import Censoring, FixedHazard, Truncation, simulate_sample

        model, truth = MODELS[idx]
        s = simulate_sample(
            FixedHazard(model, truth), 30, seed, Censoring("exponential", 0.5),
            Truncation("uniform", 0.3) if trunc else None,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                fit = fit_ml(model, s)
            except Exception:
                return
        try:
            c = nlh_curve(fit, plot, flavor)
        except SingularInformationError:
            # boundary fits have no curve
            return
        assert np.all(c.kappa2 >= -1e-12 * np.maximum(1.0, c.kappa2.max()))
