"""Sensitivity analysis for over-specified BRD models.

An over-specified model has more parameters than the eight free observable
probabilities.  Fixing one or two sensitivity coefficients and fitting the
rest by maximum likelihood traces a ridge of fits that all reproduce the
observed table.  The range of theta along the ridge is the interval of
ignorance; the union of the per-point confidence intervals is the interval
of uncertainty.
"""
from __future__ import annotations

import dataclasses
import io
import itertools
import logging

import numpy as np
from scipy import optimize, stats

from .brd import BoundaryError, BrdSpec, design_matrix, fit_brd, saturated_loglik, theta_of, observed_loglik

log = logging.getLogger(__name__)

SATURATION_TOL = 1e-4
RANGE_CAP = 30.0


@dataclasses.dataclass(frozen=True)
class OverspecSpec:
    """An over-specified model and the coefficients used as sensitivity axes.

    ``sensitivity`` holds design-column indices of ``base``; on the log
    scale each is an additive contrast of log alpha or log beta.
    """

    name: str
    base: BrdSpec
    sensitivity: tuple
    description: str = ""

    @property
    def df(self):
        return self.base.df

    @property
    def labels(self):
        return [design_matrix(self.base)[1][i] for i in self.sensitivity]


OVERSPEC_MODELS = {
    "model10": OverspecSpec(
        "model10", BrdSpec("col", "additive", "model10"), (7,),
        "alpha depends on attendance, log beta additive in both answers"),
    "model11": OverspecSpec(
        "model11", BrdSpec("additive", "row", "model11"), (4,),
        "log alpha additive in both answers, beta depends on independence"),
    "model12": OverspecSpec(
        "model12", BrdSpec("additive", "additive", "model12"), (4, 8),
        "log alpha and log beta both additive"),
}


def overspec_spec(name):
    try:
        return OVERSPEC_MODELS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown over-specified model {name!r}") from None


@dataclasses.dataclass(frozen=True)
class GridPoint:
    sens: tuple
    loglik: float
    theta: float
    ci: tuple  # (lo, hi) or (nan, nan) when unavailable
    retained: bool


@dataclasses.dataclass
class IgnoranceResult:
    spec: OverspecSpec
    scale: str
    theta_ii: tuple
    theta_iu: tuple
    grid: list
    ranges: tuple
    saturated_loglik: float

    @property
    def n_retained(self):
        return sum(p.retained for p in self.grid)

    def to_csv(self):
        buf = io.StringIO()
        names = self.spec.labels
        buf.write(",".join(names + ["loglik", "theta", "ci_lo", "ci_hi", "retained"]) + "\n")
        for p in self.grid:
            vals = [f"{v:.6g}" for v in p.sens] + [f"{p.loglik:.6f}", f"{p.theta:.6f}",
                                                    f"{p.ci[0]:.6f}", f"{p.ci[1]:.6f}", str(int(p.retained))]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()

    def to_record(self):
        return {
            "model": self.spec.name,
            "scale": self.scale,
            "theta_ii": list(self.theta_ii),
            "theta_iu": None if self.theta_iu is None else list(self.theta_iu),
            "ranges": [list(r) for r in self.ranges],
            "n_grid": len(self.grid),
            "n_retained": self.n_retained,
        }


def _fit_at(t, spec, values, start):
    fixed = dict(zip(spec.sensitivity, values))
    if start is not None:
        start = start.copy()
        for i, v in fixed.items():
            start[i] = v
    return fit_brd(t, spec.base, fixed=fixed, start=start)


def _detect_range(t, spec, axis, sat, tol=1e-4, initial=2.0):
    """Expand a symmetric range on one axis until theta at the ends settles
    (or the fit stops saturating, or the cap is reached)."""
    ends = []
    for sign in (-1.0, 1.0):
        L, prev, start = initial, None, None
        while True:
            vals = [0.0] * len(spec.sensitivity)
            vals[axis] = sign * L
            fit = _fit_at(t, spec, vals, start)
            start = fit.coef
            if fit.loglik < sat - SATURATION_TOL:
                L /= 2 ** 0.5
                break
            if prev is not None and abs(fit.theta - prev) < tol:
                break
            if L >= RANGE_CAP:
                L = RANGE_CAP
                break
            prev = fit.theta
            L = min(2 * L, RANGE_CAP)
        ends.append(sign * L)
    return tuple(ends)


def ignorance_interval(t, spec, *, grid=None, ranges=None, level=0.95, scale="log"):
    """Interval of ignorance and interval of uncertainty for theta.

    ``grid`` is the number of points per axis (default 201 for one axis,
    41 for two).  ``ranges`` overrides the auto-detected ``(lo, hi)`` per
    axis.  ``scale="linear"`` uses a linear-scale parameterization of the
    missingness factors instead of the log-linear one.
    """
    if isinstance(spec, str):
        spec = overspec_spec(spec)
    if scale == "linear":
        return _linear_interval(t, spec, grid=grid, ranges=ranges, level=level)
    if scale != "log":
        raise ValueError("scale must be 'log' or 'linear'")
    nd = len(spec.sensitivity)
    grid = grid or (201 if nd == 1 else 41)
    sat = saturated_loglik(t)
    if ranges is None:
        ranges = tuple(_detect_range(t, spec, a, sat) for a in range(nd))
    axes = [np.linspace(lo, hi, grid) for lo, hi in ranges]
    pts = []
    start = None
    # snake through the grid so each fit warm-starts from its neighbour
    order = [[0] * 0]
    if nd == 1:
        order = [(i,) for i in range(grid)]
    else:
        order = [(i, j if i % 2 == 0 else grid - 1 - j) for i in range(grid) for j in range(grid)]
    for idx in order:
        vals = tuple(float(axes[a][i]) for a, i in enumerate(idx))
        fit = _fit_at(t, spec, vals, start)
        start = fit.coef
        keep = fit.loglik >= sat - SATURATION_TOL
        ci = fit.theta_ci if fit.theta_ci is not None else (np.nan, np.nan)
        pts.append(GridPoint(vals, fit.loglik, fit.theta, tuple(map(float, ci)), bool(keep)))
    return _summarize(spec, "log", pts, ranges, sat)


def _summarize(spec, scale, pts, ranges, sat):
    kept = [p for p in pts if p.retained]
    if not kept:
        raise RuntimeError("no grid point reproduces the observed table; widen the grid")
    th = [p.theta for p in kept]
    lo = [p.ci[0] for p in kept if np.isfinite(p.ci[0])]
    hi = [p.ci[1] for p in kept if np.isfinite(p.ci[1])]
    iu = (min(lo), max(hi)) if lo else None
    return IgnoranceResult(spec, scale, (min(th), max(th)), iu, pts, tuple(ranges), sat)


# -- linear-scale variant ------------------------------------------------------

def _linear_table(u, spec):
    """Full table from linear-scale factors.

    ``u`` = (3 completer log-odds, alpha coefficients, beta coefficients,
    log gamma); alpha_jk and beta_jk are linear in the coefficients.
    """
    X, _ = design_matrix(spec.base)
    na, nb = spec.base.n_alpha, spec.base.n_beta
    lam = np.concatenate([[0.0], u[:3]])
    n11 = np.exp(lam - lam.max()).reshape(2, 2)
    A = X[8:12, 3:3 + na] @ u[3:3 + na]
    B = X[4:8, 3 + na:3 + na + nb] @ u[3 + na:3 + na + nb]
    if np.any(A <= 0) or np.any(B <= 0):
        return None
    A, B = A.reshape(2, 2), B.reshape(2, 2)
    g = np.exp(u[-1])
    tab = np.stack([n11, n11 * B, n11 * A, n11 * A * B * g])
    return tab / tab.sum()


def _linear_fit(t, spec, vals, start):
    m = design_matrix(spec.base)[0].shape[1]
    free = [i for i in range(m) if i not in spec.sensitivity]

    def full(uf):
        u = np.empty(m)
        u[free] = uf
        u[list(spec.sensitivity)] = vals
        return u

    def nll(uf):
        tab = _linear_table(full(uf), spec)
        return 1e10 if tab is None else -observed_loglik(tab, t)

    res = optimize.minimize(nll, start[free], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 40000, "maxfev": 40000})
    res = optimize.minimize(nll, res.x, method="Powell", options={"xtol": 1e-10, "ftol": 1e-12})
    u = full(res.x)
    return u, _linear_table(u, spec), -res.fun


def _linear_start(t, spec):
    m = design_matrix(spec.base)[0].shape[1]
    fit = fit_brd(t, spec.base)
    p = fit.params
    u = np.zeros(m)
    u[:3] = fit.coef[:3]
    na, nb = spec.base.n_alpha, spec.base.n_beta
    # level coefficients at the geometric mean factor, contrasts at zero
    u[3] = np.exp(np.log(p.alpha).mean())
    u[3 + na] = np.exp(np.log(p.beta).mean())
    u[-1] = np.log(p.gamma)
    return u


def _linear_detect_range(t, spec, axis, start, sat, base, tol=1e-4):
    """Expand one axis from ``base`` until the fit stops saturating (the
    factors would turn negative) or theta settles."""
    ends = []
    for sign in (-1.0, 1.0):
        L, prev, u = base, None, start
        good = 0.0
        for _ in range(12):
            vals = np.zeros(len(spec.sensitivity))
            vals[axis] = sign * L
            u_new, tab, ll = _linear_fit(t, spec, vals, u)
            if tab is None or ll < sat - SATURATION_TOL:
                break
            good, u = L, u_new
            th = theta_of(tab)
            if prev is not None and abs(th - prev) < tol:
                break
            prev = th
            L *= 2.0
        ends.append(sign * good)
    return tuple(ends)


def _linear_interval(t, spec, *, grid=None, ranges=None, level=0.95):
    nd = len(spec.sensitivity)
    grid = grid or (41 if nd == 1 else 11)
    sat = saturated_loglik(t)
    start = _linear_start(t, spec)
    if ranges is None:
        na = spec.base.n_alpha
        base = [0.5 * (start[3] if i < 3 + na else start[3 + na]) for i in spec.sensitivity]
        ranges = tuple(_linear_detect_range(t, spec, a, start, sat, base[a]) for a in range(nd))
    axes = [np.linspace(lo, hi, grid) for lo, hi in ranges]
    pts = []
    for vals in itertools.product(*axes):
        u, tab, ll = _linear_fit(t, spec, np.array(vals), start)
        if tab is None:
            continue
        start = u
        keep = ll >= sat - SATURATION_TOL
        pts.append(GridPoint(tuple(map(float, vals)), ll, theta_of(tab), (np.nan, np.nan), bool(keep)))
    return _summarize(spec, "linear", pts, ranges, sat)


# -- simple bounds and naive estimators --------------------------------------

def nonparametric_bounds(t):
    """Worst-case bounds on theta: every missing answer set to "no", then
    every missing answer set to "yes" wherever the observed part allows."""
    lo = t.z11[0, 0]
    hi = t.z11[0, 0] + t.z10[0] + t.z01[0] + t.z00
    return float(lo / t.n), float(hi / t.n)


@dataclasses.dataclass(frozen=True)
class NaiveEstimates:
    complete_case: float
    available_case: float
    bounds: tuple
    warnings: tuple = ()


def naive_estimators(t):
    """Complete-case and available-case estimates of theta.

    The available-case estimate multiplies the proportion answering yes on
    independence among all who answered it by the completers' proportion
    answering yes on attendance among those answering yes on independence.
    """
    if t.z11.sum() == 0:
        raise ZeroDivisionError("no completers")
    cc = t.z11[0, 0] / t.z11.sum()
    p_j = (t.z11[0].sum() + t.z10[0]) / (t.z11.sum() + t.z10.sum())
    p_k_given_j = t.z11[0, 0] / t.z11[0].sum()
    ac = p_j * p_k_given_j
    lo, hi = nonparametric_bounds(t)
    warn = tuple(f"{name} estimate {v:.4f} lies outside the nonparametric bounds"
                 for name, v in (("complete-case", cc), ("available-case", ac)) if not lo - 1e-12 <= v <= hi + 1e-12)
    for w in warn:
        log.warning(w)
    return NaiveEstimates(float(cc), float(ac), (lo, hi), warn)
