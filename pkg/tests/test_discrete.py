from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import binomial_table, model_sample
from nlh.data import DiscreteTable, group_to_discrete
from nlh.discrete import (
    ConstantDiscreteModel,
    DiscreteFitError,
    GroupedContinuousModel,
    delta_plot,
    discrete_curve,
    discrete_log_likelihood,
    discrete_model_from_id,
    discrete_score,
    fit_discrete,
    sigma_discrete,
)
from nlh.engine import nlh_curve
from nlh.fitting import DegenerateFitError, fit_ml
from nlh.models import (
    compound_poisson_frailty_model,
    exponential_model,
    gompertz_model,
    weibull_model,
)
from oracles import constant_display

TABLE = DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 5], [2, 3, 1])


class TestConstantModel:
    def test_closed_form(self):
        fit = fit_discrete(ConstantDiscreteModel(), TABLE)
        assert fit.theta[0] == pytest.approx(6.0 / 23.0, rel=1e-15)
        assert fit.converged

    def test_sigma_hand_value(self):
        th = 6.0 / 23.0
        sig = sigma_discrete(ConstantDiscreteModel(), [th], TABLE)
        assert sig[0, 0] == pytest.approx(2.3 / (th * (1 - th)), rel=1e-14)
        assert fit_discrete(ConstantDiscreteModel(), TABLE).std_errors[0] ** 2 == pytest.approx(th * (1 - th) / 23.0)

    def test_score_zero_at_estimate(self):
        assert discrete_score(ConstantDiscreteModel(), [6.0 / 23.0], TABLE)[0] == pytest.approx(0.0, abs=1e-12)

    def test_loglik_hand_value(self):
        th = 0.25
        ref = 6 * math.log(th) + 17 * math.log(1 - th)
        assert discrete_log_likelihood(ConstantDiscreteModel(), [th], TABLE) == pytest.approx(ref)

    def test_type_b_matches_closed_form_display(self):
        for seed in range(5):
            tab = binomial_table(ConstantDiscreteModel(), [0.08], 500, np.arange(11.0), seed)
            c = discrete_curve(fit_discrete(ConstantDiscreteModel(), tab), "B")
            ref = constant_display(tab)
            assert_allclose(c.nlh[:-1], ref[:-1], rtol=1e-10, atol=1e-12)
            assert not c.defined[-1]

    def test_type_b_ends_at_zero(self):
        c = discrete_curve(fit_discrete(ConstantDiscreteModel(), TABLE), "B")
        assert c.d_n[-1] == pytest.approx(0.0, abs=1e-14)

    def test_type_a_hand_value(self):
        fit = fit_discrete(ConstantDiscreteModel(), TABLE)
        th = fit.theta[0]
        c = discrete_curve(fit, "A")
        ref = math.sqrt(10) * (2 / 10 - th + 3 / 8 - th)
        assert c.d_n[1] == pytest.approx(ref)

    def test_single_small_interval_approaches_exponential_information(self):
        # one interval of width w with hazard rate lam: no one leaves before the end
        lam, w, n = 1.0, 0.02, 1000
        model = GroupedContinuousModel(exponential_model())
        tab = DiscreteTable.from_arrays([0.0], [w], [n], [20], n=n)
        disc = sigma_discrete(model, [lam], tab)[0, 0]
        cont = (n * w / n) / lam
        assert disc == pytest.approx(cont, rel=0.02)

    def test_all_fail_is_an_error(self):
        tab = DiscreteTable.from_arrays([0, 1], [1, 2], [4, 2], [2, 2])
        with pytest.raises(DiscreteFitError):
            fit_discrete(ConstantDiscreteModel(), DiscreteTable.from_arrays([0], [1], [4], [4]))
        assert fit_discrete(ConstantDiscreteModel(), tab).theta[0] == pytest.approx(4 / 6)

    def test_no_events(self):
        with pytest.raises(DegenerateFitError):
            fit_discrete(ConstantDiscreteModel(), DiscreteTable.from_arrays([0], [1], [4], [0]))


class TestGroupedModels:
    @pytest.mark.parametrize(
        "model, theta",
        [
            (weibull_model(), (0.3, 1.4)),
            (gompertz_model(), (0.2, 0.3)),
            (compound_poisson_frailty_model(), (1.5, 0.6, 1.3, 0.8)),
        ],
    )
    def test_derivative_matches_finite_differences(self, model, theta):
        gm = GroupedContinuousModel(model)
        theta = np.array(theta, dtype=float)
        _, hs = gm.hazards(TABLE, theta)
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = 1e-6 * max(abs(theta[j]), 1.0)
            fd = (gm.hazards(TABLE, theta + e)[0] - gm.hazards(TABLE, theta - e)[0]) / (2 * e[j])
            assert_allclose(hs[:, j], fd, rtol=1e-5, atol=1e-10)

    def test_hazards_in_unit_interval(self):
        h, _ = GroupedContinuousModel(gompertz_model()).hazards(TABLE, (0.2, 0.3))
        assert np.all((h > 0) & (h < 1))

    def test_exponential_grouping_is_constant_hazard(self):
        h, _ = GroupedContinuousModel(exponential_model()).hazards(TABLE, (0.3,))
        assert_allclose(h, 1 - math.exp(-0.3))

    def test_splitting_an_event_free_interval(self):
        model = GroupedContinuousModel(weibull_model())
        split = DiscreteTable.from_arrays([0, 1, 2, 2.5], [1, 2, 2.5, 3], [10, 8, 5, 5], [2, 3, 0, 1], n=10)
        base = DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 5], [2, 3, 1], n=10)
        # the event-free piece carries the same subjects, so only its survival factor changes hands
        tab_a = DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 5], [2, 3, 0], n=10)
        tab_b = DiscreteTable.from_arrays([0, 1, 2, 2.5], [1, 2, 2.5, 3], [10, 8, 5, 5], [2, 3, 0, 0], n=10)
        for th in [(0.3, 1.4), (0.5, 0.9)]:
            assert discrete_log_likelihood(model, th, tab_a) == pytest.approx(discrete_log_likelihood(model, th, tab_b), rel=1e-13)
        assert base.k == 3 and split.k == 4
        a = fit_discrete(model, tab_a)
        b = fit_discrete(model, tab_b)
        assert_allclose(a.theta, b.theta, rtol=1e-8)
        assert a.loglik == pytest.approx(b.loglik, rel=1e-12)

    def test_model_ids(self):
        assert isinstance(discrete_model_from_id("constant"), ConstantDiscreteModel)
        assert isinstance(discrete_model_from_id("gompertz"), GroupedContinuousModel)
        with pytest.raises(ValueError):
            discrete_model_from_id("nope")


class TestRecovery:
    def test_grouped_gompertz(self):
        truth = np.array([0.05, 0.3])
        model = GroupedContinuousModel(gompertz_model())
        tab = binomial_table(model, truth, 2000, np.arange(16.0), 21)
        fit = fit_discrete(model, tab)
        assert fit.converged
        assert np.all(np.abs(fit.theta - truth) < 3 * fit.std_errors)

    @pytest.mark.slow
    def test_grouped_gompertz_coverage(self):
        truth = np.array([0.05, 0.3])
        model = GroupedContinuousModel(gompertz_model())
        inside = 0
        for rep in range(100):
            fit = fit_discrete(model, binomial_table(model, truth, 2000, np.arange(16.0), 300 + rep))
            inside += np.all(np.abs(fit.theta - truth) < 3 * fit.std_errors)
        assert inside >= 97

    def test_compound_poisson(self):
        truth = np.array([1.5, 0.6, 1.3, 0.8])
        model = GroupedContinuousModel(compound_poisson_frailty_model())
        tab = binomial_table(model, truth, 20000, np.concatenate([[0.0, 0.75], np.arange(1.0, 21.0)]), 22)
        fit = fit_discrete(model, tab)
        assert fit.converged
        assert np.all(np.abs(fit.theta - truth) < 3 * fit.std_errors)


class TestContinuumLimit:
    @pytest.fixture(scope="class")
    @staticmethod
    def pair():
        s = model_sample(gompertz_model(), (0.5, 0.8), 3000, 31)
        cuts = np.arange(0.0, s.time.max() + 0.02, 0.01)
        tab = group_to_discrete(s, cuts)
        disc = fit_discrete(GroupedContinuousModel(gompertz_model()), tab)
        cont = fit_ml(gompertz_model(), s)
        return s, tab, disc, cont

    def test_parameters(self, pair):
        _, _, disc, cont = pair
        assert_allclose(disc.theta, cont.theta, rtol=0.02)
        assert_allclose(disc.sigma, cont.sigma_pm, rtol=0.02)

    def test_type_b_curves(self, pair):
        _, tab, disc, cont = pair
        dc = discrete_curve(disc, "B")
        full = nlh_curve(cont, "B", "pm", at=tab.right)
        idx = np.searchsorted(full.times, tab.right)
        assert_allclose(full.times[idx], tab.right)
        kappa, d_n = full.kappa[idx], full.d_n[idx]
        live = dc.defined & (kappa > 0.1 * kappa.max())
        assert_allclose(dc.kappa[live], kappa[live], rtol=0.02)
        assert np.max(np.abs(dc.d_n - d_n)) < 0.02 * np.max(np.abs(d_n))


class TestDeltaPlot:
    def test_standard_normal_under_truth(self):
        model = ConstantDiscreteModel()
        vals = []
        for rep in range(400):
            tab = binomial_table(model, [0.1], 2000, np.arange(6.0), 500 + rep)
            vals.append(delta_plot(fit_discrete(model, tab)).values)
        vals = np.array(vals)
        assert np.all(np.abs(vals.mean(axis=0)) < 0.1)
        assert np.all(np.abs(vals.var(axis=0) - 1.0) < 0.15)

    def test_grouped_gompertz_under_truth(self):
        model = GroupedContinuousModel(gompertz_model())
        vals = np.array(
            [
                delta_plot(fit_discrete(model, binomial_table(model, (0.05, 0.3), 2000, np.arange(9.0), 900 + rep))).values
                for rep in range(300)
            ]
        )
        assert np.all(np.abs(vals.mean(axis=0)) < 0.1)
        assert np.all(np.abs(vals.var(axis=0) - 1.0) < 0.15)

    def test_empty_interval_undefined(self):
        tab = DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 0], [2, 8, 0])
        d = delta_plot(fit_discrete(ConstantDiscreteModel(), DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 0], [2, 3, 0])))
        assert not d.defined[2]
        assert np.isnan(d.w2[2])
        assert np.isnan(d.values[2])
        assert_allclose(d.midpoints, [0.5, 1.5, 2.5])
        assert tab.k == 3

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(2, 8),
        st.floats(0.02, 0.5),
        st.integers(5, 300),
        st.integers(0, 2**31),
        st.sampled_from(["constant", "exponential", "weibull", "gompertz"]),
    )
    def test_variance_nonnegative(self, k, h, n, seed, model_id):
        tab = binomial_table(ConstantDiscreteModel(), [h], n, np.arange(k + 1.0), seed)
        assume(tab.events.sum() > 0)
        model = discrete_model_from_id(model_id)
        try:
            fit = fit_discrete(model, tab)
        except (DiscreteFitError, DegenerateFitError, ArithmeticError):
            assume(False)
        assume(fit.converged)
        d = delta_plot(fit)
        live = tab.at_risk > 0
        assert np.all(d.w2[live] >= -1e-12)
        assert np.all(np.isnan(d.w2[~live]))
        assert np.all(discrete_curve(fit, "B").kappa2 >= -1e-12)
