import numpy as np
import pytest

from incompfit.checking import (
    cell_summary,
    conditional_normal,
    lrt,
    nested,
    ppc_run,
    replicate_rng,
    variance_decomposition,
)
from incompfit.datasets import AGES, GrowthDataset, GrowthSubject
from incompfit.gaussian import MODELS, GaussianModelSpec, fit_gaussian


@pytest.fixture(scope="module")
def fits(trimmed):
    return {name: fit_gaussian(trimmed, MODELS[name], "reml") for name in ("model1a", "model1b")}


def test_ppc_shapes_and_augmentation(trimmed, fits):
    r = ppc_run(trimmed, fits["model1a"], n_sims=5, n_augment=2, seed=3)
    assert len(r.sim_summaries) == 5 and len(r.augmented_summary) == 2
    assert set(r.sim_summaries[0]) == {(g, a) for g in ("girl", "boy") for a in AGES}
    m = trimmed.mask
    for Ya in r.augmented_data:
        assert Ya.shape == (27, 4)
        assert np.array_equal(Ya[m], trimmed.Y[m])
        assert np.isfinite(Ya).all()
    assert not np.array_equal(r.augmented_data[0], r.augmented_data[1])


def test_ppc_no_sims(trimmed, fits):
    r = ppc_run(trimmed, fits["model1a"], n_sims=0, seed=0)
    assert r.sim_summaries == [] and len(r.envelope("girl", 10)) == 0
    assert len(r.augmented_summary) == 1


def test_ppc_reproducible(trimmed, fits):
    a = ppc_run(trimmed, fits["model1b"], n_sims=4, seed=11)
    b = ppc_run(trimmed, fits["model1b"], n_sims=4, seed=11)
    c = ppc_run(trimmed, fits["model1b"], n_sims=4, seed=12)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != c.to_csv()


def test_replicate_streams_are_order_free(trimmed, fits):
    long = ppc_run(trimmed, fits["model1a"], n_sims=6, seed=5)
    short = ppc_run(trimmed, fits["model1a"], n_sims=3, seed=5)
    assert long.sim_summaries[:3] == short.sim_summaries
    x = replicate_rng(5, 0, 2).standard_normal(3)
    assert np.array_equal(x, replicate_rng(5, 0, 2).standard_normal(3))


def test_simulated_means_converge(trimmed, fits):
    f = fits["model1b"]
    r = ppc_run(trimmed, f, n_sims=2000, seed=1)
    for g in ("girl", "boy"):
        for a in AGES:
            assert r.envelope(g, a).mean() == pytest.approx(f.mean(g, a), abs=0.05)


def test_csv_long_format(trimmed, fits):
    text = ppc_run(trimmed, fits["model1a"], n_sims=2, seed=0).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "replicate,kind,sex,age,mean,sd"
    assert len(lines) == 1 + 3 * 8
    assert sum(",augmented," in ln for ln in lines) == 8


def test_conditional_normal():
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    m, C = conditional_normal(np.zeros(2), S, np.array([1.0, 0.0]), np.array([True, False]))
    assert np.allclose(m, [0.5]) and np.allclose(C, [[1.5]])


def test_cell_summary():
    Y = np.arange(16, dtype=float).reshape(4, 4)
    s = cell_summary(Y, np.array(["girl", "girl", "boy", "boy"]))
    assert s[("girl", 8)] == (2.0, pytest.approx(np.sqrt(8.0)))


@pytest.mark.parametrize("method", ["ml", "reml"])
def test_lrt_1a_1b(trimmed, method):
    f0 = fit_gaussian(trimmed, MODELS["model1a"], method)
    f1 = fit_gaussian(trimmed, MODELS["model1b"], method)
    r = lrt(f0, f1)
    assert r.df == 2
    assert 1e-4 <= r.p <= 1e-3


def test_lrt_identical(fits):
    r = lrt(fits["model1a"], fits["model1a"])
    assert r.stat == 0 and r.p == 1.0 and r.df == 0


def test_lrt_errors(trimmed, fits):
    with pytest.raises(ValueError, match="nested"):
        lrt(fits["model1b"], fits["model1a"])
    m7 = fit_gaussian(trimmed, MODELS["model7"], "reml")
    with pytest.raises(ValueError, match="REML"):
        lrt(m7, fits["model1a"])
    with pytest.raises(ValueError, match="methods"):
        lrt(fit_gaussian(trimmed, MODELS["model1a"], "ml"), fits["model1b"])


def test_nested_relation():
    assert nested(MODELS["model3"], MODELS["model2"])
    assert nested(MODELS["model7"], MODELS["model1"])
    assert not nested(MODELS["model1"], MODELS["model7"])
    assert not nested(MODELS["model1b"], MODELS["model1a"])


def test_lrt_model3_in_model2(trimmed):
    f3 = fit_gaussian(trimmed, MODELS["model3"], "ml")
    f2 = fit_gaussian(trimmed, MODELS["model2"], "ml")
    r = lrt(f3, f2)
    assert r.df == 1
    # independent refits from jittered starts reach the same optimum
    g3 = fit_gaussian(trimmed, MODELS["model3"], "ml", n_starts=5, seed=99)
    g2 = fit_gaussian(trimmed, MODELS["model2"], "ml", n_starts=5, seed=98)
    assert g3.loglik == pytest.approx(f3.loglik, abs=1e-6)
    assert g2.loglik == pytest.approx(f2.loglik, abs=1e-6)
    assert r.stat == pytest.approx(2 * (g2.loglik - g3.loglik), abs=1e-6)


def test_variance_decomposition(fits):
    vd = variance_decomposition(fits["model1b"])
    assert vd["girl"][0] > vd["boy"][0]
    assert vd["girl"][1] < vd["boy"][1]
    with pytest.raises(ValueError):
        variance_decomposition(fits["model1a"])


def test_variance_decomposition_needs_cs(trimmed):
    with pytest.raises(ValueError):
        variance_decomposition(fit_gaussian(trimmed, GaussianModelSpec("saturated", "unstructured", True), "ml"))


def test_variance_decomposition_recovers_truth():
    rng = np.random.default_rng(42)
    truth = {"girl": (4.0, 0.6), "boy": (2.5, 2.8)}
    n, k = 200, 4
    subs = []
    for g, (d, s2) in truth.items():
        for _ in range(n):
            y = 22.0 + rng.normal(0, np.sqrt(d)) + rng.normal(0, np.sqrt(s2), k)
            subs.append(GrowthSubject(len(subs) + 1, g, tuple(y)))
    ds = GrowthDataset(tuple(subs), "complete")
    f = fit_gaussian(ds, MODELS["model1b"], "reml")
    for g, (d, s2) in truth.items():
        d_hat, s2_hat = variance_decomposition(f)[g]
        se_s2 = np.sqrt(2 * s2 ** 2 / (n * (k - 1)))
        se_d = np.sqrt(2 * (s2 + k * d) ** 2 / n + se_s2 ** 2) / k
        assert abs(s2_hat - s2) < 3 * se_s2
        assert abs(d_hat - d) < 3 * se_d
