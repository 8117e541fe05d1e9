"""Replication runs: compute each published table and compare to
:mod:`incompfit.reference`.

Every function returns a :class:`Report` holding result rows (for CSV
export) and a list of :class:`Check` records.
"""
from __future__ import annotations

import dataclasses
import io

import numpy as np

from . import reference as R
from .brd import BRD_MODELS, complete_observed, fit_brd, gof, mar_counterpart, predict_complete
from .checking import lrt, ppc_run, variance_decomposition
from .datasets import apply_cc, apply_locf, load_growth, load_spo, trim_growth
from .gaussian import MODELS, anova_per_time, fit_gaussian, manova_fit
from .ignorance import OVERSPEC_MODELS, ignorance_interval, naive_estimators, nonparametric_bounds
from .influence import fit_selection_null, local_influence, refit_without


@dataclasses.dataclass(frozen=True)
class Check:
    name: str
    expected: object
    actual: object
    tolerance: float
    passed: bool

    def to_record(self):
        return dataclasses.asdict(self)


def _num(name, expected, actual, tol):
    ok = bool(np.isfinite(actual) and abs(actual - expected) <= tol + 1e-12)
    return Check(name, float(expected), float(actual), float(tol), ok)


def _exact(name, expected, actual):
    return Check(name, expected, actual, 0.0, expected == actual)


@dataclasses.dataclass
class Report:
    name: str
    rows: list
    checks: list
    extra: dict = dataclasses.field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def rows_csv(self):
        if not self.rows:
            return ""
        keys = list(self.rows[0])
        buf = io.StringIO()
        buf.write(",".join(keys) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r[k]) for k in keys) + "\n")
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _tol(key, override):
    return R.TOL[key] if override is None else override


# -- growth data ---------------------------------------------------------------

def growth_datasets(source=None):
    full = load_growth(source)
    trimmed = trim_growth(full)
    return {"original": full, "observed": trimmed, "cc": apply_cc(trimmed), "locf": apply_locf(trimmed)}


def table1(tolerance=None, source=None):
    """Boys' means and SEs at ages 8 and 10 by data version and method."""
    data = growth_datasets(source)
    spec = MODELS["model1"]
    results = {}
    for principle, ds in data.items():
        for method in ("ml", "reml"):
            f = fit_gaussian(ds, spec, method)
            idx = [f.beta_labels.index(f"boy:{a}") for a in (8, 10)]
            results[(principle, method)] = [(f.beta[i], f.se_beta[i]) for i in idx]
        an = anova_per_time(ds)
        results[(principle, "anova")] = [an[("boy", a)][:2] for a in (8, 10)]
    mf = manova_fit(data["observed"])
    idx = [mf.beta_labels.index(f"boy:{a}") for a in (8, 10)]
    results[("observed", "manova")] = [(mf.beta[i], mf.se_beta[i]) for i in idx]
    rows, checks = [], []
    for key, vals in results.items():
        rows.append({"data": key[0], "method": key[1], "mean8": float(vals[0][0]), "se8": float(vals[0][1]),
                     "mean10": float(vals[1][0]), "se10": float(vals[1][1])})
        exp = R.TABLE1.get(key)
        if exp is None:
            continue
        for (em, es), (am, as_), age in zip(exp, vals, (8, 10)):
            checks.append(_num(f"table1/{key[0]}/{key[1]}/mean{age}", em, am, _tol("mean", tolerance)))
            checks.append(_num(f"table1/{key[0]}/{key[1]}/se{age}", es, as_, _tol("se", tolerance)))
    return Report("growth-table1", rows, checks)


def table3(tolerance=None, source=None):
    """Boys' ML means under three covariance structures."""
    full = load_growth(source)
    data = {"complete": full, "trimmed": trim_growth(full)}
    rows, checks = [], []
    for (dname, model), exp in R.TABLE3.items():
        f = fit_gaussian(data[dname], MODELS[model], "ml")
        got = (f.mean("boy", 8), f.mean("boy", 10))
        rows.append({"data": dname, "model": model, "covariance": MODELS[model].covariance,
                     "mean8": got[0], "mean10": got[1]})
        for age, e, a in zip((8, 10), exp, got):
            checks.append(_num(f"table3/{dname}/{model}/mean{age}", e, a, _tol("mean", tolerance)))
    return Report("growth-table3", rows, checks)


def growth_ppc(seed=0, sims=20, method="reml", tolerance=None, source=None):
    """Shared versus sex-specific compound symmetry: LRT and envelope ranks."""
    ds = trim_growth(load_growth(source))
    f0 = fit_gaussian(ds, MODELS["model1a"], method)
    f1 = fit_gaussian(ds, MODELS["model1b"], method)
    test = lrt(f0, f1)
    p0 = ppc_run(ds, f0, sims, 1, seed)
    p1 = ppc_run(ds, f1, sims, 1, seed)
    r0, r1 = p0.rank("girl", 10), p1.rank("girl", 10)
    lo, hi = R.LRT_P_RANGE
    checks = [
        Check("ppc/lrt/p_in_range", [lo, hi], test.p, 0.0, lo <= test.p <= hi),
        _exact("ppc/lrt/df", 2, test.df),
        Check("ppc/model1a/girl10_rank_at_most", 2, r0, 0.0, r0 <= 2),
        Check("ppc/model1b/girl10_interior", [1, sims - 1], r1, 0.0, 0 < r1 < sims),
    ]
    vd = variance_decomposition(f1)
    rows = [{"model": "model1a", "loglik": f0.loglik, "girl10_rank": r0, "n_sims": sims},
            {"model": "model1b", "loglik": f1.loglik, "girl10_rank": r1, "n_sims": sims}]
    extra = {"lrt": dataclasses.asdict(test), "variance": {g: list(v) for g, v in vd.items()},
             "envelope_model1a": p0.to_csv(), "envelope_model1b": p1.to_csv()}
    return Report("growth-ppc", rows, checks, extra)


def growth_influence(model="model1", tolerance=None, source=None):
    ds = trim_growth(load_growth(source))
    spec = MODELS[model]
    res = local_influence(ds, fit_selection_null(ds, spec))
    top4, top8 = res.top(4), res.top(8)
    checks = [
        Check("influence/top4", sorted(R.INFLUENCE_TOP4), sorted(top4), 0.0, top4 == R.INFLUENCE_TOP4),
        Check("influence/top8_contains", sorted(R.INFLUENCE_TOP8), sorted(top8), 0.0, R.INFLUENCE_TOP8 <= top8),
    ]
    sep = MODELS["model7"]
    full = fit_gaussian(ds, sep, "ml")
    red = refit_without(ds, R.INFLUENCE_TOP4, sep)
    c = np.array([0.0, 0.0, -1.0, 1.0])  # boys' minus girls' slope
    e0, s0 = full.contrast(c)
    e1, s1 = red.contrast(c)
    checks.append(Check("influence/refit_slope_sign", float(np.sign(e0)), float(np.sign(e1)), 0.0,
                        np.sign(e0) == np.sign(e1)))
    checks.append(Check("influence/refit_slope_significance", bool(abs(e0 / s0) > 1.96),
                        bool(abs(e1 / s1) > 1.96), 0.0, (abs(e0 / s0) > 1.96) == (abs(e1 / s1) > 1.96)))
    sex = dict(zip(ds.ids, ds.sex))
    rows = [{"id": int(i), "sex": sex[i], "incomplete": int(i in ds.incomplete_ids), "c_i": float(ci),
             "rank": res.ranking.index(int(i)) + 1} for i, ci in zip(res.ids, res.c)]
    k, ratio = res.gap()
    extra = {"ranking": res.ranking, "gap": {"k": k, "ratio": ratio},
             "slope_contrast": {"full": [e0, s0], "without_top4": [e1, s1]},
             "psi": res.null_fit.psi.tolist()}
    return Report("growth-influence", rows, checks, extra)


# -- opinion survey --------------------------------------------------------------

def table2(grid=None, tolerance=None, overspec=True, source=None):
    t = load_spo(source)
    rows, checks = [], []
    fits = {}
    for name, spec in BRD_MODELS.items():
        f = fit_brd(t, spec)
        fits[name] = f
        mar = mar_counterpart(f)
        df, ll, th, ci, thm = R.TABLE2_BRD[name]
        rows.append({"model": name, "df": f.df, "loglik": f.loglik, "theta": f.theta,
                     "ci_lo": f.theta_ci[0] if f.theta_ci else float("nan"),
                     "ci_hi": f.theta_ci[1] if f.theta_ci else float("nan"), "theta_mar": mar.theta})
        checks.append(_exact(f"table2/{name}/df", df, f.df))
        checks.append(_num(f"table2/{name}/loglik", ll, f.loglik, _tol("loglik", tolerance)))
        checks.append(_num(f"table2/{name}/theta", th, f.theta, _tol("theta", tolerance)))
        for side, e, a in zip(("lo", "hi"), ci, f.theta_ci or (np.nan, np.nan)):
            checks.append(_num(f"table2/{name}/ci_{side}", e, a, _tol("theta_ci", tolerance)))
        checks.append(_num(f"table2/{name}/theta_mar", thm, mar.theta, _tol("theta_mar", tolerance)))
    for name, (lr, df, pearson) in R.GOF.items():
        g = gof(fits[name], t)
        checks.append(_num(f"gof/{name}/lr", lr, g.lr, _tol("lr", tolerance)))
        checks.append(_exact(f"gof/{name}/df", df, g.df))
        if pearson is not None:
            checks.append(_num(f"gof/{name}/pearson", pearson, g.pearson, _tol("pearson", tolerance)))
    extra = {}
    if overspec:
        for name, spec in OVERSPEC_MODELS.items():
            res = ignorance_interval(t, spec, grid=grid)
            df, ll, ii, iu, thm = R.TABLE2_OVERSPEC[name]
            top = max(res.grid, key=lambda p: p.loglik)
            rows.append({"model": name, "df": spec.df, "loglik": top.loglik, "theta": float("nan"),
                         "ci_lo": float("nan"), "ci_hi": float("nan"), "theta_mar": float("nan"),
                         "ii_lo": res.theta_ii[0], "ii_hi": res.theta_ii[1],
                         "iu_lo": res.theta_iu[0] if res.theta_iu else float("nan"),
                         "iu_hi": res.theta_iu[1] if res.theta_iu else float("nan")})
            checks.append(_num(f"table2/{name}/loglik", ll, top.loglik, _tol("loglik", tolerance)))
            for side, e, a in zip(("lo", "hi"), ii, res.theta_ii):
                checks.append(_num(f"table2/{name}/ignorance_{side}", e, a, _tol("ignorance", tolerance)))
            if iu is not None:
                for side, e, a in zip(("lo", "hi"), iu, res.theta_iu):
                    checks.append(_num(f"table2/{name}/uncertainty_{side}", e, a, _tol("uncertainty", tolerance)))
            extra[f"grid_{name}"] = res.to_csv()
        for r in rows:
            r.setdefault("ii_lo", float("nan"))
            for k in ("ii_hi", "iu_lo", "iu_hi"):
                r.setdefault(k, float("nan"))
    lo, hi = nonparametric_bounds(t)
    checks.append(_num("bounds/lower", R.BOUNDS[0], lo, _tol("bounds", tolerance)))
    checks.append(_num("bounds/upper", R.BOUNDS[1], hi, _tol("bounds", tolerance)))
    nv = naive_estimators(t)
    checks.append(_num("naive/cc", R.CC_ESTIMATE, nv.complete_case, _tol("bounds", tolerance)))
    checks.append(Check("naive/above_upper_bound", hi, [nv.complete_case, nv.available_case], 0.0,
                        nv.complete_case > hi and nv.available_case > hi))
    extra["naive"] = {"cc": nv.complete_case, "ac": nv.available_case}
    return Report("spo-table2", rows, checks, extra)


def tables45(tolerance=None, source=None):
    t = load_spo(source)
    rows, checks = [], []
    tables = {}
    for base in ("BRD1", "BRD2", "BRD7", "BRD9"):
        f = fit_brd(t, BRD_MODELS[base])
        m = mar_counterpart(f)
        for label, src in ((base, f), (f"{base}(MAR)", m)):
            for kind in ("prediction", "completion"):
                tab = predict_complete(src) if kind == "prediction" else complete_observed(src, t)
                got = R.as_2x8(tab.cells)
                tables[(label, kind)] = tab
                exp = R.table45(label, kind)
                for j in range(2):
                    rows.append({"model": label, "kind": kind, "j": ("yes", "no")[j],
                                 **{f"c{c}": float(got[j, c]) for c in range(8)}})
                    for c in range(8):
                        checks.append(_num(f"tables45/{label}/{kind}/r{j}c{c}", exp[j, c], got[j, c],
                                           _tol("cell", tolerance)))
    return Report("spo-tables45", rows, checks, {"tables": {f"{k[0]}_{k[1]}": v.to_csv() for k, v in tables.items()}})
