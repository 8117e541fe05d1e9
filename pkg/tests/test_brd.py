import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import em_pi2

from incompfit.brd import (
    BRD_MODELS,
    OBS_INDEX,
    BoundaryError,
    BrdParams,
    BrdSpec,
    MisfitError,
    brd_spec,
    closed_form_pi2,
    complete_observed,
    design_matrix,
    fit_brd,
    gof,
    ignorable_mle,
    mar_counterpart,
    observed_loglik,
    observed_probs,
    predict_complete,
    saturated_loglik,
    theta_ci,
)
from incompfit.datasets import IncompleteTable
from incompfit.ignorance import nonparametric_bounds

TABLE2 = {  # model: (df, loglik, theta)
    "BRD1": (6, -2495.29, 0.892), "BRD2": (7, -2467.43, 0.884), "BRD3": (7, -2463.10, 0.881),
    "BRD4": (7, -2467.43, 0.765), "BRD5": (7, -2463.10, 0.844), "BRD6": (8, -2431.06, 0.819),
    "BRD7": (8, -2431.06, 0.764), "BRD8": (8, -2431.06, 0.741), "BRD9": (8, -2431.06, 0.867),
}


@pytest.fixture(scope="module")
def fits(spo):
    return {name: fit_brd(spo, spec) for name, spec in BRD_MODELS.items()}


@pytest.mark.parametrize("name", sorted(TABLE2))
def test_table2_rows(fits, name):
    df, ll, th = TABLE2[name]
    f = fits[name]
    assert f.df == df
    assert f.loglik == pytest.approx(ll, abs=0.01)
    assert f.theta == pytest.approx(th, abs=0.001)
    assert f.converged and not f.boundary


def test_saturated_loglik(spo, fits):
    sat = saturated_loglik(spo)
    assert sat == pytest.approx(-2431.0577, abs=1e-4)
    for name in ("BRD6", "BRD7", "BRD8", "BRD9"):
        assert fits[name].loglik == pytest.approx(sat, abs=1e-6)


def test_theta_ci_brd1(fits, spo):
    lo, hi = fits["BRD1"].theta_ci
    assert (lo, hi) == pytest.approx((0.878, 0.906), abs=0.005)
    assert theta_ci(fits["BRD1"], spo, level=0.5)[0] > lo


def test_design_shapes():
    for name, spec in BRD_MODELS.items():
        X, labels = design_matrix(spec)
        assert X.shape == (16, spec.df) and len(labels) == spec.df
        assert np.linalg.matrix_rank(X) == spec.df
    assert brd_spec("brd7") is BRD_MODELS["BRD7"]
    with pytest.raises(ValueError):
        brd_spec("BRD10")
    with pytest.raises(ValueError):
        BrdSpec("sometimes", "constant")


def test_obs_index_layout():
    assert list(np.bincount(OBS_INDEX)) == [1, 1, 1, 1, 2, 2, 2, 2, 4]


def test_params_rebuild_table(fits):
    for f in fits.values():
        p = f.params
        assert np.allclose(p.table(), f.table, atol=1e-12)
        assert isinstance(p, BrdParams)


def test_brd7_prediction_row(fits):
    pred = predict_complete(fits["BRD7"]).block("10")
    assert pred[0] == pytest.approx([3.2, 155.8], abs=0.1)


def test_gof(fits, spo):
    g1 = gof(fits["BRD1"], spo)
    assert g1.df == 2 and g1.lr == pytest.approx(128.47, abs=0.01)
    g2 = gof(fits["BRD2"], spo)
    assert g2.df == 1 and g2.lr == pytest.approx(72.75, abs=0.01)
    for name in ("BRD7", "BRD9"):
        g = gof(fits[name], spo)
        assert g.df == 0 and round(g.lr, 6) == 0 and round(g.pearson, 6) == 0 and g.p_lr == 1.0
    assert g1.lr == pytest.approx(2 * (saturated_loglik(spo) - fits["BRD1"].loglik))


def test_gof_infinite_when_impossible(fits, spo):
    f = fits["BRD1"]
    tab = f.table.copy()
    tab[3] = 0.0  # no mass where 136 subjects were observed
    broken = type(f)(**{**f.__dict__, "table": tab / tab.sum()})
    assert np.isinf(gof(broken, spo).lr)
    with pytest.raises(MisfitError):
        complete_observed(broken, spo)


def test_mar_counterparts(fits, spo):
    expected = {"BRD1": 0.8920, "BRD2": 0.8915, "BRD3": 0.8915, "BRD4": 0.8915, "BRD5": 0.8915,
                "BRD6": 0.8919, "BRD7": 0.8919, "BRD8": 0.8919, "BRD9": 0.8919}
    for name, f in fits.items():
        m = mar_counterpart(f)
        assert m.loglik(spo) == pytest.approx(f.loglik, abs=1e-6)
        assert m.theta == pytest.approx(expected[name], abs=0.0005)
        assert m.table.sum() == pytest.approx(1.0)
        assert np.allclose(m.table.sum(axis=0), m.measurement, atol=1e-9)  # self-consistent
    m1 = mar_counterpart(fits["BRD1"])
    assert np.allclose(m1.table, fits["BRD1"].table, atol=1e-6)


def test_brd2_mar_completion_block(fits, spo):
    c = complete_observed(mar_counterpart(fits["BRD2"]), spo).block("00")
    assert c.ravel() == pytest.approx([121.2, 9.3, 2.3, 3.2], abs=0.1)


def test_completion_preserves_observed(fits, spo):
    for f in fits.values():
        c = complete_observed(f, spo)
        assert np.allclose(observed_probs(c.cells / spo.n) * spo.n, spo.observed_vector())
        p = predict_complete(f)
        assert p.total == pytest.approx(spo.n)


def test_saturated_completion_equals_prediction(fits, spo):
    for name in ("BRD6", "BRD7", "BRD8", "BRD9"):
        c = complete_observed(fits[name], spo).cells
        p = predict_complete(fits[name]).cells
        assert np.allclose(c, p, atol=1e-4)


def test_completed_table_csv(fits):
    text = predict_complete(fits["BRD7"]).to_csv()
    lines = text.strip().splitlines()
    assert len(lines) == 3 and lines[0].startswith("j,11_k=yes")


def test_boundary_fit_has_no_ci():
    t = IncompleteTable([[50, 10], [5, 30]], [20, 0], [10, 10], 5)
    f = fit_brd(t, BRD_MODELS["BRD6"])
    assert f.boundary
    assert f.theta_ci is None and f.ci_error
    with pytest.raises(BoundaryError):
        theta_ci(f, t)


# -- closed form for dropout-only tables -----------------------------------

def test_closed_form_matches_em():
    rng = np.random.default_rng(7)
    for _ in range(100):
        z11 = rng.integers(1, 60, size=(2, 2))
        z10 = rng.integers(0, 40, size=2)
        t = IncompleteTable(z11, z10, [0, 0], 0)
        pi1, pi2, pi2_cc = closed_form_pi2(t)
        assert pi2 == pytest.approx(em_pi2(t), abs=1e-9)
        assert pi1 == pytest.approx((z11[0].sum() + z10[0]) / t.n)
        assert pi2_cc == pytest.approx(z11[:, 0].sum() / z11.sum())


def test_closed_form_errors():
    with pytest.raises(ValueError):
        closed_form_pi2(IncompleteTable([[1, 1], [1, 1]], [1, 1], [1, 0], 0))
    with pytest.raises(ZeroDivisionError):
        closed_form_pi2(IncompleteTable([[1, 1], [0, 0]], [1, 3], [0, 0], 0))


def test_closed_form_no_dropout():
    t = IncompleteTable([[10, 5], [3, 2]], [0, 0], [0, 0], 0)
    pi1, pi2, pi2_cc = closed_form_pi2(t)
    assert pi2 == pytest.approx(pi2_cc)


def test_ignorable_mle_complete():
    f = ignorable_mle([10, 20, 30, 40, 0, 0, 0, 0, 0])
    assert np.allclose(f, np.array([[0.1, 0.2], [0.3, 0.4]]))


tables = st.builds(
    lambda v: IncompleteTable.from_vector(v),
    st.lists(st.integers(1, 300), min_size=9, max_size=9),
)


@settings(max_examples=25, deadline=None)
@given(tables, st.sampled_from(sorted(BRD_MODELS)))
def test_fit_properties(t, name):
    f = fit_brd(t, BRD_MODELS[name])
    lo, hi = nonparametric_bounds(t)
    assert lo - 1e-9 <= f.theta <= hi + 1e-9
    assert f.table.sum() == pytest.approx(1.0)
    assert f.loglik <= saturated_loglik(t) + 1e-6
    assert observed_loglik(f.table, t) == pytest.approx(f.loglik, abs=1e-8)
    m = mar_counterpart(f)
    assert m.loglik(t) == pytest.approx(f.loglik, abs=1e-6)
