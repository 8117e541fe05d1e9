import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import numeric_bivariate_mle, random_bivariate

from incompfit.datasets import AGES, GrowthDataset, apply_cc
from incompfit.gaussian import (
    MODELS,
    BivariateSample,
    FitError,
    GaussianModelSpec,
    anova_per_time,
    bivariate_mle,
    fit_gaussian,
    manova_fit,
    profiles,
    subject_logliks,
)


def boys(fit):
    return [fit.beta[fit.beta_labels.index(f"boy:{a}")] for a in (8, 10)]


def boys_se(fit):
    return [fit.se_beta[fit.beta_labels.index(f"boy:{a}")] for a in (8, 10)]


def test_trimmed_ml_model1(trimmed):
    f = fit_gaussian(trimmed, MODELS["model1"], "ml")
    assert f.converged
    assert boys(f) == pytest.approx([22.88, 23.17], abs=0.005)
    assert boys_se(f) == pytest.approx([0.56, 0.68], abs=0.02)


def test_complete_reml_model1(growth):
    f = fit_gaussian(growth, MODELS["model1"], "reml")
    assert boys(f) == pytest.approx([22.88, 23.81], abs=0.005)
    assert boys_se(f) == pytest.approx([0.58, 0.51], abs=0.02)


def test_spd_and_positive_se(trimmed):
    for name in ("model1", "model1b", "model2", "model3", "model7", "model8"):
        f = fit_gaussian(trimmed, MODELS[name], "ml")
        assert f.converged, name
        assert (f.se_beta > 0).all()
        for S in f.covariance.values():
            assert np.allclose(S, S.T)
            assert np.linalg.eigvalsh(S).min() > 0


def test_parameter_counts():
    assert MODELS["model1"].n_cov_params() == 10
    assert MODELS["model1b"].n_cov_params() == 4
    assert MODELS["model8"].n_cov_params() == 1
    assert GaussianModelSpec(occasions=(8, 10)).n_cov_params() == 3


def test_spec_validation():
    with pytest.raises(ValueError):
        GaussianModelSpec(mean="quadratic")
    with pytest.raises(ValueError):
        GaussianModelSpec(occasions=(8, 9))
    with pytest.raises(ValueError):
        fit_gaussian(None, MODELS["model1"], method="gee")


def test_complete_data_means_equal_cell_means(growth):
    cm = growth.cell_means()
    for name in ("model1", "model7b", "model8b"):
        for method in ("ml", "reml"):
            f = fit_gaussian(growth, MODELS[name], method)
            for g in ("girl", "boy"):
                got = [f.mean(g, a) for a in AGES]
                assert got == pytest.approx(cm[g], abs=1e-8)


def test_se_ordering_complete(growth):
    ml = boys_se(fit_gaussian(growth, MODELS["model1"], "ml"))
    reml = boys_se(fit_gaussian(growth, MODELS["model1"], "reml"))
    an = anova_per_time(growth)
    for i, a in enumerate((8, 10)):
        assert ml[i] <= reml[i] <= an[("boy", a)][1]


def test_anova(trimmed, growth):
    an = anova_per_time(trimmed)
    assert an[("boy", 8)][:2] == pytest.approx((22.88, 0.61), abs=0.005)
    assert an[("boy", 10)][:2] == pytest.approx((24.14, 0.74), abs=0.005)
    assert anova_per_time(growth)[("boy", 10)][1] == pytest.approx(0.53, abs=0.005)
    one = trimmed.subset(ids=[1, 2, 3])
    with pytest.raises(FitError):
        anova_per_time(one.subset(ids=[1]))


def test_manova(trimmed, growth):
    m = manova_fit(trimmed)
    assert boys(m) == pytest.approx([24.00, 24.14], abs=0.005)
    assert boys_se(m) == pytest.approx([0.48, 0.66], abs=0.02)
    r = fit_gaussian(apply_cc(trimmed), MODELS["model1"], "reml")
    assert np.allclose(m.beta, r.beta) and np.allclose(m.se_beta, r.se_beta)
    full = fit_gaussian(growth, MODELS["model1"], "reml")
    assert np.allclose(manova_fit(growth).beta, full.beta, atol=1e-8)


def test_profiles(growth, trimmed):
    p = profiles(fit_gaussian(growth, MODELS["model1"], "ml"), growth)
    for g in ("girl", "boy"):
        assert np.max(np.abs(p["observed"][g] - p["fitted"][g])) < 1e-6
    p = profiles(fit_gaussian(trimmed, MODELS["model1"], "ml"), trimmed)
    for g in ("girl", "boy"):
        diff = np.abs(p["observed"][g] - p["fitted"][g])
        assert diff[1] > 0.1
        assert np.all(diff[[0, 2, 3]] < 1e-6)
    assert p["observed"]["boy"][1] == pytest.approx(24.14, abs=0.005)
    assert p["fitted"]["boy"][1] == pytest.approx(23.17, abs=0.005)


def test_nested_logliks(trimmed):
    for cov in ("unstructured", "compound_symmetry"):
        ll = [fit_gaussian(trimmed, GaussianModelSpec(m, cov), "ml").loglik
              for m in ("saturated", "separate_lines", "parallel_lines")]
        assert ll[0] >= ll[1] - 1e-8 >= ll[2] - 2e-8


def test_permutation_invariance(trimmed):
    f = fit_gaussian(trimmed, MODELS["model1"], "ml")
    rng = np.random.default_rng(1)
    perm = GrowthDataset(tuple(trimmed.subjects[i] for i in rng.permutation(len(trimmed))), "trimmed")
    g = fit_gaussian(perm, MODELS["model1"], "ml")
    assert g.loglik == pytest.approx(f.loglik, abs=1e-6)


def test_start_invariance(trimmed):
    a = fit_gaussian(trimmed, MODELS["model1"], "ml", seed=0)
    b = fit_gaussian(trimmed, MODELS["model1"], "ml", seed=7, n_starts=5)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-6)


def test_subject_logliks_sum(trimmed):
    f = fit_gaussian(trimmed, MODELS["model1"], "ml")
    ll = subject_logliks(trimmed, f.spec, f.beta, f.theta)
    assert ll.sum() == pytest.approx(f.loglik, abs=1e-8)


def test_record_roundtrip(trimmed):
    rec = fit_gaussian(trimmed, MODELS["model1b"], "reml").to_record()
    assert set(rec["cov_params"]) == {"girl", "boy"}
    assert rec["converged"] is True


def test_two_occasion_fit_matches_closed_form(trimmed):
    spec = GaussianModelSpec("saturated", "unstructured", occasions=(8, 10))
    boys_only = trimmed.subset(sex="boy")
    f = fit_gaussian(boys_only, spec, "ml")
    Y = boys_only.Y
    est = bivariate_mle(BivariateSample(Y[:, 0], Y[:, 1]))
    assert f.mean("boy", 10) == pytest.approx(est.mu2, abs=1e-6)
    assert f.mean("boy", 8) == pytest.approx(est.mu1, abs=1e-6)


# -- bivariate closed form ---------------------------------------------------

def test_bivariate_closed_form_matches_numeric_mle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        s = random_bivariate(rng)
        e = bivariate_mle(s)
        ref = numeric_bivariate_mle(s)
        assert [e.mu1, e.mu2, e.s11, e.s12, e.s22] == pytest.approx(ref, abs=1e-6)


def test_bivariate_uncorrelated_collapses():
    y1 = np.array([1.0, 2.0, 3.0, 4.0, 10.0])
    y2 = np.array([5.0, 7.0, 7.0, 5.0, np.nan])  # zero covariance with y1[:4]
    e = bivariate_mle(BivariateSample(y1, y2))
    assert e.slope == pytest.approx(0.0, abs=1e-12)
    assert e.mu2 == pytest.approx(e.mu2_available)


def test_bivariate_complete():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(10, 2))
    e = bivariate_mle(BivariateSample(y[:, 0], y[:, 1]))
    assert e.mu2 == pytest.approx(y[:, 1].mean())


def test_bivariate_errors():
    with pytest.raises(ValueError):
        bivariate_mle(BivariateSample([1.0, 2.0, 3.0], [1.0, np.nan, np.nan]))
    with pytest.raises(ValueError):
        bivariate_mle(BivariateSample([1.0, 1.0, 3.0], [1.0, 2.0, np.nan]))
    with pytest.raises(ValueError):
        BivariateSample([np.nan, 1.0], [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bivariate_ml_between_cc_and_shift(seed):
    """mu2 moves from the completers' mean by slope times the y1 shift."""
    s = random_bivariate(np.random.default_rng(seed))
    e = bivariate_mle(s)
    obs = ~np.isnan(s.y2)
    shift = e.slope * (s.y1.mean() - s.y1[obs].mean())
    assert e.mu2 == pytest.approx(e.mu2_available + shift, abs=1e-9)
    assert e.s11 * e.s22 - e.s12 ** 2 >= -1e-12
