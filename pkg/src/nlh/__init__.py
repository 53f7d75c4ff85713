"""Normalised local hazard (NLH) goodness-of-fit curves for survival models.

Typical use::

    from nlh import read_sample_csv, weibull_model, fit_ml, nlh_curve

    sample = read_sample_csv("data.csv")
    fit = fit_ml(weibull_model(), sample)
    curve = nlh_curve(fit, "B")
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bands import band_threshold, early_exceedance_prob, empirical_band_positions, max_band_exceedance
from .cox import CoxFit, cox_curve, fit_cox_exponential
from .data import (
    DataFormatError,
    DiscreteTable,
    NoEventsError,
    SurvivalSample,
    build_risk_path,
    group_to_discrete,
    kernel_smooth_hazard,
    nelson_aalen,
    quartic_kernel,
    read_discrete_csv,
    read_sample_csv,
    write_discrete_csv,
    write_sample_csv,
)
from .discrete import (
    ConstantDiscreteModel,
    DiscreteFit,
    GroupedContinuousModel,
    delta_plot,
    discrete_curve,
    fit_discrete,
)
from .documents import SCHEMA_VERSION, CurveDocument, curve_document
from .engine import (
    DeterministicWeight,
    LogMinusPhiHat,
    NlhCurve,
    OneMinusThetaS,
    OptimalAgainst,
    TabulatedWeight,
    curve_fixed,
    curve_type_a,
    curve_type_b,
    curve_type_c,
    curve_windowed,
    nlh_curve,
)
from .fitting import DegenerateFitError, FitResult, fit_ml, fit_profile, fit_window
from .models import (
    HazardModel,
    InadmissibleParameterError,
    compound_poisson_frailty_model,
    exponential_model,
    fixed_model,
    gamma_model,
    gompertz_model,
    model_from_id,
    onset_weibull_model,
    simple_frailty_model,
    tabulated_model,
    weibull_model,
)
from .power import (
    Censoring,
    FixedHazard,
    FrailtyContamination,
    LocalAlternative,
    Scenario,
    Truncation,
    drift_curve,
    frailty_power_prediction,
    least_false_theta,
    local_mean_shift,
    mc_study,
    simulate_sample,
)
from .svg import render_svg

__all__ = [name for name in dir() if not name.startswith("_")]
