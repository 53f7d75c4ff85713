from __future__ import annotations

import numpy as np
import pytest

from nlh.data import DiscreteTable, SurvivalSample
from nlh.models import (
    compound_poisson_frailty_model,
    exponential_model,
    gamma_model,
    gompertz_model,
    onset_weibull_model,
    simple_frailty_model,
    weibull_model,
)
from nlh.power import Censoring, FixedHazard, simulate_sample

# Shipped families with a parameter value well inside their admissible region.
MODEL_CASES = {
    "exponential": (exponential_model, (1.5,)),
    "weibull": (weibull_model, (1.2, 1.4)),
    "gompertz": (gompertz_model, (0.8, 0.6)),
    "gompertz_neg": (gompertz_model, (1.3, -0.4)),
    "frailty": (simple_frailty_model, (1.4, 0.7)),
    "gamma": (gamma_model, (2.3, 1.7)),
    "onset_weibull": (lambda: onset_weibull_model(0.1), (1.6, 0.5)),
    "cpfrailty": (compound_poisson_frailty_model, (1.5, 0.6, 1.3, 0.8)),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def small_sample(rng, n=20, rate=1.0, censor_rate=0.5, entry=False, covariates=0):
    t = rng.exponential(1.0 / rate, n)
    c = rng.exponential(1.0 / censor_rate, n)
    exit_ = np.minimum(t, c)
    status = (t <= c).astype(int)
    if status.sum() == 0:
        status[0] = 1
    v = None
    if entry:
        v = rng.uniform(0.0, 0.5, n) * exit_
    z = rng.normal(size=(n, covariates)) if covariates else None
    return SurvivalSample.from_arrays(exit_, status, entry=v, covariates=z)


def model_sample(model, theta, n, seed, censor_rate=None):
    cens = Censoring("exponential", censor_rate) if censor_rate else Censoring()
    return simulate_sample(FixedHazard(model, theta), n, seed, cens)


def binomial_table(model, theta, n, cuts, seed):
    """Life table drawn interval by interval from the model's conditional probabilities."""
    rng = np.random.default_rng(seed)
    cuts = np.asarray(cuts, dtype=float)
    k = cuts.size - 1
    probe = DiscreteTable.from_arrays(cuts[:-1], cuts[1:], np.full(k, n), np.zeros(k), n=n)
    h, _ = model.hazards(probe, theta)
    Y, dN = np.zeros(k), np.zeros(k)
    alive = n
    for i in range(k):
        Y[i] = alive
        dN[i] = rng.binomial(alive, h[i])
        alive -= int(dN[i])
    return DiscreteTable.from_arrays(cuts[:-1], cuts[1:], Y, dN, n=n)
