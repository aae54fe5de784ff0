import math

import numpy as np
import pytest

from conftest import random_dataset
from hiersel import Dataset, ModelAlpha, alrsis_screen, assis_screen, fit_mle, gaussian, score_statistic
from hiersel.screening import (d_gamma, default_gamma, lr_statistic, score_from_column,
                               working_quantities)
from hiersel.simulation import gen_correlated_design, gen_linear_response, true_model


def quadratic_form_score(family, data, fit, column):
    """Score test of adding ``column``, from the explicit gradient and Fisher information."""
    X = data.design(fit.alpha)
    eta = X @ fit.coef_vector()
    mu = family.mean(eta)
    v = family.variance(eta)
    phi = fit.phi_hat
    Z = np.column_stack([X, column])
    U = Z.T @ (data.y - mu) / phi  # zero except the last entry at the MLE
    info = Z.T @ (v[:, None] * Z) / phi
    inv = np.linalg.inv(info)
    return float(U @ inv @ U)


@pytest.mark.parametrize("kind", ["gaussian", "binomial", "poisson"])
def test_score_matches_quadratic_form(kind):
    rng = np.random.default_rng(8)
    for seed in range(8):
        fam, data = random_dataset(kind, 70, 6, seed)
        alpha = ModelAlpha((0, 1), ((0, 1),))
        fit = fit_mle(fam, data, alpha)
        wq = working_quantities(fam, data, fit)
        for j, k in [(2, None), (3, 4), (5, 2), (2, 3)]:
            s = score_statistic(wq, j, k)
            col = data.column(j) if k is None else data.column(j) * data.column(k)
            ref = quadratic_form_score(fam, data, fit, col)
            assert s == pytest.approx(ref, rel=1e-6)
        v = rng.standard_normal(data.n)
        assert score_from_column(wq, v) == pytest.approx(quadratic_form_score(fam, data, fit, v), rel=1e-6)


def test_gaussian_empty_base_working_quantities():
    fam, data = random_dataset("gaussian", 40, 3, 0)
    wq = working_quantities(fam, data, fit_mle(fam, data, ModelAlpha()))
    assert np.allclose(wq.z, data.y)
    assert np.allclose(wq.r, data.y - data.y.mean())


def test_projection_idempotent():
    fam, data = random_dataset("binomial", 60, 4, 1)
    wq = working_quantities(fam, data, fit_mle(fam, data, ModelAlpha((0, 1), ((0, 1),))))
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.standard_normal(data.n)
        pv = wq.project(v)
        assert np.allclose(wq.project(pv), pv, atol=1e-8)


def test_residual_orthogonal_to_weighted_design():
    for kind in ("gaussian", "binomial", "poisson"):
        fam, data = random_dataset(kind, 80, 4, 2)
        fit = fit_mle(fam, data, ModelAlpha((0, 2), ((0, 2),)))
        wq = working_quantities(fam, data, fit)
        WX = wq.sqrt_w[:, None] * data.design(fit.alpha)
        assert np.max(np.abs(WX.T @ wq.r)) < 1e-6


def test_residual_against_finite_difference_score():
    # <r, W^1/2 c> is the derivative of the log-likelihood along a new column c
    fam, data = random_dataset("binomial", 30, 3, 3)
    alpha = ModelAlpha((0,))
    fit = fit_mle(fam, data, alpha)
    wq = working_quantities(fam, data, fit)
    eta = data.design(alpha) @ fit.coef_vector()
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = rng.standard_normal(data.n)
        h = 1e-5
        ll = lambda t: np.sum(data.y * (eta + t * c) - fam.cumulant(eta + t * c))
        fd = (ll(h) - ll(-h)) / (2 * h)
        assert wq.r @ (wq.sqrt_w * c) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_orthogonal_direction_scores_zero():
    fam, data = random_dataset("gaussian", 50, 3, 4)
    wq = working_quantities(fam, data, fit_mle(fam, data, ModelAlpha()))
    v = np.random.default_rng(2).standard_normal(data.n)
    v -= v.mean()
    v -= (v @ wq.r) / (wq.r @ wq.r) * wq.r
    assert score_from_column(wq, v) == pytest.approx(0.0, abs=1e-20)


def test_direction_in_span_scores_zero():
    fam, data = random_dataset("poisson", 50, 3, 4)
    fit = fit_mle(fam, data, ModelAlpha((0,)))
    wq = working_quantities(fam, data, fit)
    assert score_from_column(wq, 2.0 * data.X[:, 0] + 1.0) == 0.0


def test_score_scale_invariant():
    fam, data = random_dataset("binomial", 60, 4, 5)
    wq = working_quantities(fam, data, fit_mle(fam, data, ModelAlpha((0,))))
    col = data.column(2) * data.column(3)
    assert score_from_column(wq, 5 * col) == pytest.approx(score_from_column(wq, col), rel=1e-12)


def test_partner_must_differ():
    fam, data = random_dataset("gaussian", 30, 3, 0)
    wq = working_quantities(fam, data, fit_mle(fam, data, ModelAlpha()))
    with pytest.raises(ValueError):
        score_statistic(wq, 1, 1)


def test_d_gamma():
    assert d_gamma(1 / math.log(200), 200) == 37
    assert default_gamma(200) == pytest.approx(1 / math.log(200))
    with pytest.raises(ValueError):
        d_gamma(0.0, 100)


def test_bulk_statistics_match_single_evaluations():
    fam, data = random_dataset("binomial", 60, 9, 6)
    base = ModelAlpha((0, 1), ((0, 1),))
    fit = fit_mle(fam, data, base)
    scr = assis_screen(fam, data, base, gamma=0.05, fit=fit)
    wq = working_quantities(fam, data, fit)
    outside = [j for j in range(data.p) if j not in base.mains]
    for j in outside:
        each = [score_statistic(wq, j, None)] + [score_statistic(wq, j, k) for k in outside if k != j]
        assert scr.stats[j] == pytest.approx(max(each), rel=1e-9)
        k = scr.best_partner[j]
        assert score_statistic(wq, j, k) == pytest.approx(scr.stats[j], rel=1e-9)


def test_screen_result_invariants():
    for kind in ("gaussian", "binomial", "poisson"):
        fam, data = random_dataset(kind, 100, 30, 7)
        base = ModelAlpha((0, 1), ((0, 1),))
        scr = assis_screen(fam, data, base)
        assert set(base.mains) <= set(scr.shrunk)
        assert len(scr.added) == min(scr.d_gamma, data.p - 2)
        vals = np.array(list(scr.stats.values()))
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
        # top-d: every kept candidate beats every dropped one
        kept = set(scr.added)
        dropped = [scr.stats[j] for j in scr.stats if j not in kept]
        assert min(scr.stats[j] for j in kept) >= max(dropped)


def test_screen_keeps_all_when_few_candidates():
    fam, data = random_dataset("gaussian", 100, 5, 0)
    scr = assis_screen(fam, data, ModelAlpha((0,)), gamma=0.5)
    assert scr.shrunk == (0, 1, 2, 3, 4)


def test_screen_ties_by_index():
    # duplicated columns tie; the lower index wins
    rng = np.random.default_rng(3)
    x = rng.standard_normal(50)
    X = np.column_stack([rng.standard_normal(50), x, x, rng.standard_normal(50)])
    data = Dataset.from_arrays(2 * x + 0.1 * rng.standard_normal(50), X)
    scr = assis_screen(gaussian(), data, gamma=1 / 50)
    assert scr.shrunk == (1,)


def test_new_noise_column_only_adds_partners():
    fam, data = random_dataset("gaussian", 120, 12, 8)
    before = assis_screen(fam, data)
    rng = np.random.default_rng(4)
    extra = Dataset.from_arrays(data.y, np.column_stack([data.X, rng.standard_normal(data.n)]))
    after = assis_screen(fam, extra)
    wq = working_quantities(fam, extra, fit_mle(fam, extra, ModelAlpha()))
    new = data.p
    for j in range(data.p):
        expected = max(before.stats[j], score_statistic(wq, j, new))
        assert after.stats[j] == pytest.approx(expected, rel=1e-9)
    # variables whose best partner is not the new column keep their relative order
    stable = [j for j in range(data.p) if after.best_partner[j] != new]
    order_before = sorted(stable, key=lambda j: (-before.stats[j], j))
    order_after = sorted(stable, key=lambda j: (-after.stats[j], j))
    assert order_before == order_after


def test_sure_screening_case_c():
    star = set(true_model("linear", "c").mains)
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = gen_correlated_design(200, 100, 0.0, rng)
        y = gen_linear_response(X, "c", rng)
        data = Dataset.from_arrays(y, X, standardize=False)
        hits += star <= set(assis_screen(gaussian(), data).shrunk)
    assert hits >= 95


def test_alrsis_matches_assis_argmax_on_noiseless_instance():
    rng = np.random.default_rng(11)
    X = gen_correlated_design(100, 12, 0.0, rng)
    y = gen_linear_response(X, "b", noise=False)
    data = Dataset.from_arrays(y, X, standardize=False)
    a = assis_screen(gaussian(), data, gamma=0.05)
    b = alrsis_screen(gaussian(), data, gamma=0.05)
    assert a.best_partner == b.best_partner
    for j in a.stats:
        assert b.stats[j] == pytest.approx(a.stats[j], rel=1e-8)
    assert a.shrunk == b.shrunk


def test_lr_statistics_nonnegative():
    for kind in ("gaussian", "binomial", "poisson"):
        fam, data = random_dataset(kind, 60, 6, 9)
        scr = alrsis_screen(fam, data, ModelAlpha((0,)))
        assert all(v >= 0 for v in scr.stats.values())
        fit = fit_mle(fam, data, ModelAlpha((0,)))
        for j, k in [(1, 2), (3, 4), (5, 1)]:
            assert lr_statistic(fam, data, fit, data.X[:, j] * data.X[:, k]) >= 0


def test_score_and_lr_agree_at_large_n():
    rng = np.random.default_rng(12)
    n = 2000
    X = gen_correlated_design(n, 20, 0.0, rng)
    y = gen_linear_response(X, "a", rng)
    data = Dataset.from_arrays(y, X, standardize=False)
    fam = gaussian()
    base = ModelAlpha((0, 1))
    fit = fit_mle(fam, data, base)
    wq = working_quantities(fam, data, fit)
    pairs = [(j, k) for j in range(2, 20) for k in [None] + list(range(2, 20)) if k != j]
    scores = {pr: score_statistic(wq, *pr) for pr in pairs}
    top = sorted(scores, key=scores.get, reverse=True)[:10]
    for j, k in top:
        col = data.column(j) if k is None else data.column(j) * data.column(k)
        lr = lr_statistic(fam, data, fit, col)
        assert lr == pytest.approx(scores[(j, k)], rel=0.05)


def test_alrsis_scores_failed_fits_minus_inf(caplog):
    # column 1 duplicates the base main 0, so its expanded design is singular
    rng = np.random.default_rng(0)
    x = rng.standard_normal(40)
    data = Dataset.from_arrays(x + rng.standard_normal(40), np.column_stack([x, x]))
    with caplog.at_level("INFO", logger="hiersel.screening"):
        scr = alrsis_screen(gaussian(), data, ModelAlpha((0,)), gamma=0.05)
    assert scr.stats == {1: -np.inf}
    assert "expanded fit failed" in caplog.text
