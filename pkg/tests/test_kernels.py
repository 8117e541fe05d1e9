import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from incompfit import _kernels as K
from incompfit._kernels import _fallback
from incompfit.brd import BRD_MODELS, OBS_INDEX, design_matrix, fit_brd
from incompfit.gaussian import MODELS, fit_gaussian

compiled = pytest.mark.skipif("compiled" not in K.available_backends(), reason="extension not built")


def _brd_args(rng, name="BRD7"):
    X, _ = design_matrix(BRD_MODELS[name])
    z = rng.integers(0, 200, 9).astype(float)
    theta = rng.normal(0, 1, X.shape[1])
    offset = rng.normal(0, 0.3, 16)
    X, obs, z, offset = K.as_kernel_args(X, OBS_INDEX, z, offset)
    return X, obs, z, theta, offset


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        K.use_backend("gpu")


@compiled
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(sorted(BRD_MODELS)))
def test_brd_kernels_agree(seed, name):
    X, obs, z, theta, offset = _brd_args(np.random.default_rng(seed), name)
    c = K._core
    assert np.allclose(c.cell_probs(X, theta, offset), _fallback.cell_probs(X, theta, offset), rtol=1e-12, atol=1e-15)
    l1, g1 = c.brd_loglik_grad(X, obs, z, theta, offset)
    l2, g2 = _fallback.brd_loglik_grad(X, obs, z, theta, offset)
    assert l1 == pytest.approx(l2, rel=1e-12)
    assert np.allclose(g1, g2, rtol=1e-9, atol=1e-9)
    e1 = c.brd_em(X, obs, z, theta, offset, 50, 1e-10)
    e2 = _fallback.brd_em(X, obs, z, theta, offset, 50, 1e-10)
    assert e1[2] == e2[2]
    assert e1[1] == pytest.approx(e2[1], rel=1e-9)


def test_brd_gradient_matches_differences(backend):
    X, obs, z, theta, offset = _brd_args(np.random.default_rng(1))
    _, g = K.brd_loglik_grad(X, obs, z, theta, offset)
    h = 1e-6
    num = [(K.brd_loglik_grad(X, obs, z, theta + h * e, offset)[0]
            - K.brd_loglik_grad(X, obs, z, theta - h * e, offset)[0]) / (2 * h) for e in np.eye(len(theta))]
    assert np.allclose(g, num, rtol=1e-5, atol=1e-5)


def test_em_increases_loglik(backend):
    X, obs, z, theta, offset = _brd_args(np.random.default_rng(2))
    l0 = K.brd_loglik_grad(X, obs, z, theta, offset)[0]
    _, l1, _ = K.brd_em(X, obs, z, theta, offset, 5, 0.0)
    _, l2, _ = K.brd_em(X, obs, z, theta, offset, 10, 0.0)
    assert l0 <= l1 <= l2 + 1e-12


def _mvn_args(rng, n=15, k=4, p=3, G=2):
    Y = rng.normal(size=(n, k))
    mask = (rng.uniform(size=(n, k)) > 0.25).astype(np.uint8)
    mask[:, 0] = 1
    Y = np.where(mask, Y, 0.0)
    Xd = rng.normal(size=(n, k, p))
    group = rng.integers(0, G, n).astype(np.int64)
    A = rng.normal(size=(G, k, k))
    covs = np.ascontiguousarray(A @ A.transpose(0, 2, 1) + k * np.eye(k))
    return Y, mask, Xd, group, covs


@compiled
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mvn_kernels_agree(seed):
    Y, mask, Xd, group, covs = _mvn_args(np.random.default_rng(seed))
    a = K._core.mvn_gls_terms(Y, mask, Xd, group, covs)
    b = _fallback.mvn_gls_terms(Y, mask, Xd, group, covs)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-10)
    mu = np.ascontiguousarray(Xd[..., 0])
    assert np.allclose(K._core.mvn_subject_loglik(Y, mask, mu, group, covs),
                       _fallback.mvn_subject_loglik(Y, mask, mu, group, covs), rtol=1e-10)


def test_mvn_subject_loglik_against_scipy(backend):
    from scipy import stats
    Y, mask, Xd, group, covs = _mvn_args(np.random.default_rng(4))
    mu = np.ascontiguousarray(Xd[..., 0])
    ll = K.mvn_subject_loglik(Y, mask, mu, group, covs)
    for i in range(len(Y)):
        o = mask[i].astype(bool)
        ref = stats.multivariate_normal(mu[i, o], covs[group[i]][np.ix_(o, o)]).logpdf(Y[i, o])
        assert ll[i] == pytest.approx(ref, rel=1e-10)


def test_fits_identical_across_backends(backend, trimmed, spo):
    f = fit_gaussian(trimmed, MODELS["model1"], "ml")
    assert f.loglik == pytest.approx(-193.4784, abs=1e-4)
    b = fit_brd(spo, BRD_MODELS["BRD7"])
    assert b.theta == pytest.approx(0.7642, abs=1e-4)
