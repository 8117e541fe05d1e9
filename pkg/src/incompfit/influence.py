"""Local influence of subject-level departures from MAR.

Dropout at age 10 is modelled by a selection model::

    logit P(y10 missing | y8, y10) = psi0 + psi1 * y8 + omega_i * y10

with the current-outcome coefficient absorbed into ``omega_i``.  At
``omega = 0`` the model is MAR and the likelihood factors into the Gaussian
measurement part and a logistic regression.  The curvature measure
``C_i = 2 |Delta_i' (-L'')^{-1} Delta_i|`` with
``Delta_i = d2 l_i / d theta d omega_i`` flags subjects whose small MNAR
perturbation moves the fit most.  Derivatives are central finite
differences; incomplete subjects integrate over the conditional normal of
``y10`` by Gauss-Hermite quadrature.
"""
from __future__ import annotations

import dataclasses
import io
import logging

import numpy as np
from scipy.special import expit, log_expit

from .checking import conditional_normal
from .datasets import AGES, GrowthDataset
from .gaussian import CovarianceModel, FitError, GaussianFit, build_design, fit_gaussian, subject_logliks

log = logging.getLogger(__name__)

DROP_COL = AGES.index(10)
HIST_COL = AGES.index(8)
N_NODES = 20
FD_STEP = 1e-4
QUAD_TOL = 1e-8


class SeparationError(FitError):
    """Dropout indicator perfectly separated by the age-8 value."""


@dataclasses.dataclass
class SelectionNullFit:
    measurement: GaussianFit
    psi: np.ndarray          # (psi0, psi1)
    psi_se: np.ndarray
    loglik_dropout: float
    loglik_total: float


def _dropout_data(ds):
    mask = ds.mask
    other = [c for c in range(mask.shape[1]) if c != DROP_COL]
    if not mask[:, other].all():
        raise ValueError("missingness must be confined to age 10")
    return (~mask[:, DROP_COL]).astype(float), ds.Y[:, HIST_COL]


def fit_logistic(r, x, max_iter=100, tol=1e-10):
    """Newton-Raphson fit of ``logit P(r=1) = psi0 + psi1 x``."""
    hi, lo = x[r == 1], x[r == 0]
    if len(hi) == 0 or len(lo) == 0:
        raise SeparationError("dropout indicator is constant")
    if hi.max() < lo.min() or hi.min() > lo.max():
        raise SeparationError("age-8 value separates dropouts from completers; logistic MLE is infinite")
    Z = np.column_stack([np.ones_like(x), x])
    psi = np.zeros(2)
    for _ in range(max_iter):
        p = expit(Z @ psi)
        H = (Z * (p * (1 - p))[:, None]).T @ Z
        step = np.linalg.solve(H, Z.T @ (r - p))
        psi = psi + step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise SeparationError("logistic fit did not converge")
    p = expit(Z @ psi)
    H = (Z * (p * (1 - p))[:, None]).T @ Z
    ll = float(np.sum(r * log_expit(Z @ psi) + (1 - r) * log_expit(-(Z @ psi))))
    return psi, np.sqrt(np.diag(np.linalg.inv(H))), ll


def fit_selection_null(ds: GrowthDataset, spec):
    """MAR fit of the selection model: measurement ML plus logistic dropout."""
    r, y8 = _dropout_data(ds)
    meas = fit_gaussian(ds, spec, method="ml")
    psi, se, ll = fit_logistic(r, y8)
    return SelectionNullFit(meas, psi, se, ll, meas.loglik + ll)


class _Likelihood:
    """Per-subject log-likelihood as a function of all parameters and omega."""

    def __init__(self, ds, null_fit, n_nodes=N_NODES):
        self.ds = ds
        self.spec = null_fit.measurement.spec
        self.d = build_design(ds, self.spec)
        self.cov = CovarianceModel(self.spec, len(self.d.sexes))
        self.nb = len(null_fit.measurement.beta)
        self.r, self.y8 = _dropout_data(ds)
        self.Y = ds.Y
        self.mask = ds.mask
        self.x, self.w = np.polynomial.hermite.hermgauss(n_nodes)
        self.w = self.w / np.sqrt(np.pi)
        self.theta0 = np.concatenate([null_fit.measurement.beta, null_fit.measurement.theta, null_fit.psi])

    def __call__(self, par, omega):
        nb = self.nb
        beta, th, psi = par[:nb], par[nb:-2], par[-2:]
        out = subject_logliks(self.ds, self.spec, beta, th).copy()
        covs = self.cov.matrices(th)
        mu = np.einsum("nkp,p->nk", self.d.X, beta)
        eta = psi[0] + psi[1] * self.y8
        for i in range(len(self.Y)):
            if self.r[i] == 0:
                out[i] += log_expit(-(eta[i] + omega[i] * self.Y[i, DROP_COL]))
                continue
            obs = self.mask[i]
            m, C = conditional_normal(mu[i], covs[self.d.group[i]], np.where(obs, self.Y[i], 0.0), obs)
            j = int(np.sum(~obs[:DROP_COL]))
            nodes = m[j] + np.sqrt(2.0 * C[j, j]) * self.x
            out[i] += np.log(self.w @ expit(eta[i] + omega[i] * nodes))
        return out


def _omega_slope(lik, par, h):
    z = np.zeros(len(lik.Y))
    return (lik(par, z + h) - lik(par, z - h)) / (2 * h)


def influence_derivatives(lik, h=FD_STEP):
    """``Delta`` (n, P) and total-loglik Hessian (P, P) by central differences."""
    th = lik.theta0
    P = len(th)
    scale = np.maximum(np.abs(th), 1.0) * h
    D = np.empty((len(lik.Y), P))
    for a in range(P):
        e = np.zeros(P)
        e[a] = scale[a]
        D[:, a] = (_omega_slope(lik, th + e, h) - _omega_slope(lik, th - e, h)) / (2 * scale[a])
    z = np.zeros(len(lik.Y))
    f = lambda p: lik(p, z).sum()
    H = np.empty((P, P))
    for a in range(P):
        for b in range(a, P):
            ea, eb = np.zeros(P), np.zeros(P)
            ea[a], eb[b] = scale[a], scale[b]
            H[a, b] = H[b, a] = (f(th + ea + eb) - f(th + ea - eb) - f(th - ea + eb) + f(th - ea - eb)) / (
                4 * scale[a] * scale[b])
    return D, H


@dataclasses.dataclass
class InfluenceResult:
    c: np.ndarray            # C_i in dataset order
    ids: np.ndarray
    null_fit: SelectionNullFit
    variant: str
    c_other: np.ndarray = None  # the other parameter-set variant
    quadrature_error: float = 0.0

    @property
    def ranking(self):
        order = np.argsort(-self.c, kind="stable")
        return [int(self.ids[i]) for i in order]

    def top(self, k):
        return set(self.ranking[:k])

    def gap(self, max_k=None):
        """Scree-style split: ``k`` maximizing ``C_(k) / C_(k+1)``.

        Returns ``(k, ratio)``; the ``k`` largest values are those set apart.
        Only values above ``1e-10`` times the maximum take part, since
        subjects without an omega-dependent term have ``C_i = 0`` exactly.
        """
        s = np.sort(self.c)[::-1]
        s = s[s > 1e-10 * s[0]]
        if len(s) < 2:
            return len(s), float("inf")
        max_k = min(max_k or len(self.c) // 2, len(s) - 1)
        ratios = s[:max_k] / s[1:max_k + 1]
        k = int(np.argmax(ratios))
        return k + 1, float(ratios[k])

    def to_csv(self, ds=None):
        sex = dict(zip(ds.ids, ds.sex)) if ds is not None else {}
        inc = ds.incomplete_ids if ds is not None else frozenset()
        buf = io.StringIO()
        buf.write("id,sex,incomplete,c_i,rank\n")
        rank = {sid: r + 1 for r, sid in enumerate(self.ranking)}
        for sid, ci in zip(self.ids, self.c):
            buf.write(f"{int(sid)},{sex.get(sid, '')},{int(sid in inc)},{ci:.8g},{rank[int(sid)]}\n")
        return buf.getvalue()


def local_influence(ds: GrowthDataset, null_fit: SelectionNullFit, parameters="measurement", h=FD_STEP):
    """Curvature-based influence ``C_i`` for unit perturbation directions.

    ``parameters`` selects the parameter vector used in ``Delta_i`` and the
    Hessian: ``"measurement"`` (mean and covariance parameters) or ``"all"``
    (adds the dropout coefficients).  Both are computed; the chosen one is
    ``c`` and the other ``c_other``.
    """
    if parameters not in ("measurement", "all"):
        raise ValueError("parameters must be 'measurement' or 'all'")
    if not null_fit.measurement.converged:
        raise FitError("null fit did not converge")
    lik = _Likelihood(ds, null_fit)
    qerr = _quadrature_check(ds, null_fit, lik)
    D, H = influence_derivatives(lik, h)
    m = len(lik.theta0) - 2
    out = {}
    for name, idx in (("measurement", slice(0, m)), ("all", slice(None))):
        Hs = -H[idx, idx]
        try:
            Hinv = np.linalg.inv(Hs)
        except np.linalg.LinAlgError:
            raise FitError("singular Hessian at the MAR fit") from None
        if np.linalg.cond(Hs) > 1e14:
            raise FitError("Hessian at the MAR fit is numerically singular")
        Ds = D[:, idx]
        out[name] = 2.0 * np.abs(np.einsum("ia,ab,ib->i", Ds, Hinv, Ds))
    other = "all" if parameters == "measurement" else "measurement"
    c = out[parameters]
    if not np.all(np.isfinite(c)):
        raise FitError("non-finite influence values")
    return InfluenceResult(c, ds.ids, null_fit, parameters, out[other], qerr)


def _quadrature_check(ds, null_fit, lik):
    """Compare the omega-slope under 20 and 40 nodes at the null fit."""
    lik2 = _Likelihood(ds, null_fit, 2 * N_NODES)
    a = _omega_slope(lik, lik.theta0, FD_STEP)
    b = _omega_slope(lik2, lik.theta0, FD_STEP)
    err = float(np.max(np.abs(a - b)))
    if err > QUAD_TOL:
        raise FitError(f"quadrature did not converge (node-doubling change {err:.2e})")
    return err


def refit_without(ds: GrowthDataset, exclude, spec, method="ml"):
    """Fit ``spec`` after removing the subjects in ``exclude``."""
    sub = ds.subset(exclude=set(exclude))
    present = set(sub.sex)
    if present != set(ds.sex):
        raise FitError("a sex group is empty after exclusion")
    return fit_gaussian(sub, spec, method=method)
