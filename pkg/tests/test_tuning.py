import math

import numpy as np
import pytest
from scipy import stats

from conftest import random_dataset
from hiersel import ConfigError, Dataset, DomainError, KappaRule, ModelAlpha, fit_mle, gaussian
from hiersel.models import enumerate_models
from hiersel.search import ModelFitter, exhaustive_search, penalized_objective
from hiersel.tuning import default_rule, gic, kappa, lambda_closed_form


def test_ebic_prostate_value():
    assert kappa("ebic", 136, 12600) == pytest.approx(15.03, abs=0.01)


def test_ebic_simulation_value():
    assert kappa("ebic", 200, 2000) == pytest.approx(12.674, abs=0.001)
    assert kappa("ebic", 200, 2000) == pytest.approx(math.log(2000) * math.log(math.log(200)))


def test_bic_is_log_n():
    assert kappa("bic", math.e**2, 10) == pytest.approx(2.0)


def test_hbic4():
    assert lambda_closed_form(kappa("hbic4", 200, 2000), 200) == pytest.approx(0.152018, abs=1e-6)
    # log n wins when p is tiny
    assert kappa("hbic4", 10**6, 2) == pytest.approx(math.log(10**6))
    assert kappa(KappaRule("hbic4", epsilon=0.5), 200, 2000) == pytest.approx(4.5 * math.log(2000))


def test_lambda_closed_form():
    assert lambda_closed_form(12.674, 200) == pytest.approx(0.06337, abs=1e-9)
    assert lambda_closed_form(kappa("ebic", 200, 2000), 200) == pytest.approx(0.063369, abs=1e-6)
    assert lambda_closed_form(50.0, 50) == 1.0
    with pytest.raises(DomainError):
        lambda_closed_form(0.0, 10)


def test_custom_and_parse():
    assert kappa("7.5", 100, 10) == 7.5
    assert kappa(KappaRule("custom", 3.0), 100, 10) == 3.0
    assert str(KappaRule.parse("EBIC")) == "ebic"
    for bad in ("aic", "-1", "0"):
        with pytest.raises(ConfigError):
            KappaRule.parse(bad)
    with pytest.raises(ConfigError):
        KappaRule("custom")


def test_ebic_needs_n_at_least_3():
    with pytest.raises(DomainError):
        kappa("ebic", 2, 100)


def test_default_rule():
    assert default_rule(200, 2000).rule == "ebic"
    assert default_rule(500, 100).rule == "bic"


def test_gic_kappa_zero():
    fam, data = random_dataset("binomial", 50, 3, 0)
    fit = fit_mle(fam, data, ModelAlpha((0, 1)))
    assert gic(fit, 0.0) == -2 * fit.loglik


def test_intercept_only_bic_reference():
    rng = np.random.default_rng(4)
    y = rng.normal(2.0, 1.5, 64)
    data = Dataset(y=y, X=np.zeros((64, 0)))
    fit = fit_mle(gaussian(), data, ModelAlpha())
    n = len(y)
    sigma2 = np.sum((y - y.mean()) ** 2) / (n - 1)  # dispersion estimate D / (n - df)
    ll = np.sum(stats.norm.logpdf(y, y.mean(), math.sqrt(sigma2)))
    classical = -2 * ll + math.log(n) * 1
    assert gic(fit, math.log(n), count_intercept=True) == pytest.approx(classical, rel=1e-12)
    assert gic(fit, math.log(n)) == pytest.approx(classical - math.log(n), rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_gic_penalized_objective_identity(seed):
    rng = np.random.default_rng(seed)
    kind = ("gaussian", "binomial", "poisson")[seed % 3]
    fam, data = random_dataset(kind, 60, 5, seed)
    alpha = list(enumerate_models(range(5)))[rng.integers(0, 500) % 200]
    fit = fit_mle(fam, data, alpha)
    kap = rng.uniform(0.5, 15)
    assert gic(fit, kap) == pytest.approx(-2 * penalized_objective(fit, kap / data.n), abs=1e-8)


def _path(fitter, universe, lams):
    fits = [(a, fitter(a)) for a in enumerate_models(universe)]
    fits = [(a, f) for a, f in fits if f is not None]
    out = []
    for lam in lams:
        out.append(max(fits, key=lambda af: penalized_objective(af[1], lam)))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_grid_gic_equals_closed_form(seed):
    fam, data = random_dataset("gaussian", 80, 4, 100 + seed,
                               beta={0: 0.5, 1: 0.3, (0, 1): 0.4, 2: 0.15})
    fitter = ModelFitter(fam, data)
    kap = kappa("bic", data.n, data.p)
    lams = np.logspace(-4, 0, 100)
    path = _path(fitter, range(4), lams)
    grid_alpha = min(path, key=lambda af: gic(af[1], kap))[0]
    direct, _ = exhaustive_search(fitter, lambda_closed_form(kap, data.n), range(4))
    assert grid_alpha == direct


def test_lambda_path_monotone():
    for seed in range(10):
        fam, data = random_dataset("gaussian", 80, 4, 200 + seed,
                                   beta={0: 0.5, 1: 0.3, (0, 1): 0.4, 2: 0.15})
        fitter = ModelFitter(fam, data)
        lams = np.logspace(-4, 0, 200)
        path = _path(fitter, range(4), lams)
        sizes = [a.size for a, _ in path]
        assert all(s1 >= s2 for s1, s2 in zip(sizes, sizes[1:]))
        # the selected model only changes where its size changes
        for (a1, _), (a2, _), s1, s2 in zip(path, path[1:], sizes, sizes[1:]):
            if s1 == s2:
                assert a1 == a2
        # the unpenalized fit quality can only drop as lambda grows
        lls = [f.loglik for _, f in path]
        assert all(l1 >= l2 - 1e-9 for l1, l2 in zip(lls, lls[1:]))
