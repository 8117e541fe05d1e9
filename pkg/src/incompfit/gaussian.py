"""Multivariate normal models for incomplete growth data.

Direct-likelihood (ML and REML) fitting of a saturated or straight-line
mean structure by sex paired with an unstructured, compound-symmetric or
independence covariance, optionally separate per sex.  Each subject
contributes the normal density of its observed sub-vector, so fits are
valid under MAR.

The mean parameters are profiled out by generalized least squares and the
covariance parameters are optimized on an unconstrained scale:
log-Cholesky for the unstructured matrix, ``log sigma2`` and ``log d`` for
compound symmetry ``sigma2 * I + d * J``.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings

import numpy as np
from scipy import optimize

from . import _kernels as K
from .datasets import AGES, SEXES, apply_cc

log = logging.getLogger(__name__)

MEANS = ("saturated", "separate_lines", "parallel_lines")
COVARIANCES = ("unstructured", "compound_symmetry", "independence")
LOG2PI = np.log(2 * np.pi)


class FitError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class GaussianModelSpec:
    mean: str = "saturated"
    covariance: str = "unstructured"
    group_specific: bool = False
    occasions: tuple = AGES

    def __post_init__(self):
        if self.mean not in MEANS:
            raise ValueError(f"mean must be one of {MEANS}")
        if self.covariance not in COVARIANCES:
            raise ValueError(f"covariance must be one of {COVARIANCES}")
        occ = tuple(int(a) for a in self.occasions)
        if not occ or any(a not in AGES for a in occ) or len(set(occ)) != len(occ):
            raise ValueError(f"occasions must be a subset of {AGES}")
        object.__setattr__(self, "occasions", tuple(sorted(occ)))

    def n_cov_params(self, n_groups=2):
        k = len(self.occasions)
        per = {"unstructured": k * (k + 1) // 2, "compound_symmetry": 2, "independence": 1}[self.covariance]
        return per * (n_groups if self.group_specific else 1)


# Named models used for the growth data.  7b/8b pair a saturated mean with
# compound symmetry / independence; 1a and 1b are the checking models.
MODELS = {
    "model1": GaussianModelSpec("saturated", "unstructured"),
    "model1a": GaussianModelSpec("saturated", "compound_symmetry"),
    "model1b": GaussianModelSpec("saturated", "compound_symmetry", group_specific=True),
    "model2": GaussianModelSpec("separate_lines", "unstructured"),
    "model3": GaussianModelSpec("parallel_lines", "unstructured"),
    "model7": GaussianModelSpec("separate_lines", "compound_symmetry"),
    "model7b": GaussianModelSpec("saturated", "compound_symmetry"),
    "model8": GaussianModelSpec("separate_lines", "independence"),
    "model8b": GaussianModelSpec("saturated", "independence"),
}


def model_spec(name, occasions=AGES):
    try:
        spec = MODELS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return dataclasses.replace(spec, occasions=tuple(occasions))


@dataclasses.dataclass
class Design:
    Y: np.ndarray        # (n, k) NaN where absent (zeros fed to kernels)
    mask: np.ndarray     # (n, k) bool
    X: np.ndarray        # (n, k, p)
    group: np.ndarray    # (n,) covariance-group index
    sexes: tuple         # sexes present, in SEXES order
    labels: list
    ages: np.ndarray


def build_design(ds, spec):
    cols = [AGES.index(a) for a in spec.occasions]
    Y = ds.Y[:, cols]
    mask = ~np.isnan(Y)
    if not mask.any(axis=1).all():
        raise FitError("every subject needs at least one observed occasion")
    sex = ds.sex
    sexes = tuple(g for g in SEXES if np.any(sex == g))
    ages = np.array(spec.occasions, dtype=float)
    n, k = Y.shape
    labels = []
    if spec.mean == "saturated":
        labels = [f"{g}:{a}" for g in sexes for a in spec.occasions]
        X = np.zeros((n, k, len(labels)))
        for i in range(n):
            gi = sexes.index(sex[i])
            X[i, np.arange(k), gi * k + np.arange(k)] = 1.0
    else:
        labels = [f"{g}:intercept" for g in sexes]
        if spec.mean == "separate_lines":
            labels += [f"{g}:slope" for g in sexes]
        else:
            labels += ["slope"]
        X = np.zeros((n, k, len(labels)))
        for i in range(n):
            gi = sexes.index(sex[i])
            X[i, :, gi] = 1.0
            if spec.mean == "separate_lines":
                X[i, :, len(sexes) + gi] = ages
            else:
                X[i, :, len(sexes)] = ages
    if spec.group_specific:
        if len(sexes) < 2:
            raise FitError("group-specific covariance needs both sexes")
        group = np.array([sexes.index(g) for g in sex], dtype=np.int64)
    else:
        group = np.zeros(n, dtype=np.int64)
    return Design(Y, mask, X, group, sexes, labels, ages)


class CovarianceModel:
    """Map between unconstrained parameters and per-group covariance matrices."""

    def __init__(self, spec, n_groups):
        self.kind = spec.covariance
        self.k = len(spec.occasions)
        self.G = n_groups if spec.group_specific else 1
        self.per = spec.n_cov_params(1)
        self.n = self.per * self.G
        self._tril = np.tril_indices(self.k)
        self._diag = np.diag_indices(self.k)

    def matrices(self, theta):
        k = self.k
        out = np.empty((self.G, k, k))
        for g in range(self.G):
            t = theta[g * self.per:(g + 1) * self.per]
            if self.kind == "unstructured":
                L = np.zeros((k, k))
                L[self._tril] = t
                L[self._diag] = np.exp(L[self._diag])
                out[g] = L @ L.T
            elif self.kind == "compound_symmetry":
                out[g] = np.exp(t[0]) * np.eye(k) + np.exp(t[1])
            else:
                out[g] = np.exp(t[0]) * np.eye(k)
        return out

    def start(self, S_list):
        """Unconstrained start from moment covariance estimates per group."""
        k = self.k
        th = []
        for S in S_list[: self.G]:
            S = 0.5 * (S + S.T)
            if self.kind == "unstructured":
                w, V = np.linalg.eigh(S)
                S = (V * np.maximum(w, 1e-3 * max(w.max(), 1e-8))) @ V.T
                L = np.linalg.cholesky(S)
                L[np.diag_indices(k)] = np.log(np.diag(L))
                th.extend(L[np.tril_indices(k)])
            elif self.kind == "compound_symmetry":
                off = (S.sum() - np.trace(S)) / max(k * (k - 1), 1)
                d = max(off, 0.05 * np.trace(S) / k)
                s2 = max(np.trace(S) / k - d, 0.05 * np.trace(S) / k)
                th.extend([np.log(s2), np.log(d)])
            else:
                th.append(np.log(np.trace(S) / k))
        return np.array(th)

    def labels(self, sexes):
        groups = sexes if self.G > 1 else ("all",)
        out = []
        for g in groups:
            if self.kind == "unstructured":
                out += [f"{g}:L{i}{j}" for i, j in zip(*np.tril_indices(self.k))]
            elif self.kind == "compound_symmetry":
                out += [f"{g}:log_sigma2", f"{g}:log_d"]
            else:
                out += [f"{g}:log_sigma2"]
        return out


def _moment_covs(d, G):
    # per-sex available-case centring, then pairwise-complete covariances
    out = []
    for g in range(G):
        rows = d.group == g
        R = d.Y[rows] - np.nanmean(d.Y[rows], axis=0)
        k = R.shape[1]
        S = np.empty((k, k))
        for a in range(k):
            for b in range(k):
                ok = ~np.isnan(R[:, a]) & ~np.isnan(R[:, b])
                S[a, b] = (R[ok, a] * R[ok, b]).mean() if ok.sum() > 1 else (1.0 if a == b else 0.0)
        out.append(S)
    return out


class _Objective:
    """Profiled observed-data (restricted) log-likelihood in the covariance
    parameters."""

    def __init__(self, d, cov, method):
        self.d, self.cov, self.method = d, cov, method
        self.Y0 = np.ascontiguousarray(np.where(d.mask, d.Y, 0.0))
        self.mask = np.ascontiguousarray(d.mask.astype(np.uint8))
        self.X = np.ascontiguousarray(d.X)
        self.group = np.ascontiguousarray(d.group, dtype=np.int64)
        self.p = d.X.shape[2]

    def terms(self, theta):
        covs = np.ascontiguousarray(self.cov.matrices(theta))
        logdet, XtVX, XtVy, ytVy, n_obs = K.mvn_gls_terms(self.Y0, self.mask, self.X, self.group, covs)
        beta = np.linalg.solve(XtVX, XtVy)
        quad = ytVy - XtVy @ beta
        return covs, logdet, XtVX, beta, quad, n_obs

    def __call__(self, theta):
        try:
            _, logdet, XtVX, _, quad, n_obs = self.terms(theta)
        except np.linalg.LinAlgError:
            return -np.inf
        if self.method == "ml":
            return -0.5 * (n_obs * LOG2PI + logdet + quad)
        sign, ld = np.linalg.slogdet(XtVX)
        if sign <= 0:
            return -np.inf
        return -0.5 * ((n_obs - self.p) * LOG2PI + logdet + ld + quad)

    def grad(self, theta, h=1e-5):
        g = np.empty_like(theta)
        for a in range(len(theta)):
            e = np.zeros_like(theta)
            e[a] = h
            g[a] = (self(theta + e) - self(theta - e)) / (2 * h)
        return g

    def hess(self, theta, h=1e-4):
        m = len(theta)
        H = np.empty((m, m))
        for a in range(m):
            e = np.zeros(m)
            e[a] = h
            H[:, a] = (self.grad(theta + e) - self.grad(theta - e)) / (2 * h)
        return 0.5 * (H + H.T)


@dataclasses.dataclass
class GaussianFit:
    spec: GaussianModelSpec
    method: str
    beta: np.ndarray
    beta_labels: list
    se_beta: np.ndarray
    covariance: dict          # sex (or "all") -> (k, k) matrix
    theta: np.ndarray         # unconstrained covariance parameters
    theta_labels: list
    loglik: float
    converged: bool
    n_params: int
    n_subjects: int
    sexes: tuple
    grad_norm: float = np.nan
    n_starts: int = 1
    bfgs_hess_inv: np.ndarray = dataclasses.field(default=None, repr=False)
    cov_beta: np.ndarray = dataclasses.field(default=None, repr=False)

    def mean(self, sex, age):
        """Fitted marginal mean for one (sex, age) cell."""
        x = _design_row(self.spec, self.sexes, sex, age)
        return float(x @ self.beta)

    def contrast(self, c):
        """Estimate and standard error of ``c @ beta``."""
        c = np.asarray(c, dtype=float)
        return float(c @ self.beta), float(np.sqrt(c @ self.cov_beta @ c))

    def cov_matrix(self, sex):
        return self.covariance[sex] if sex in self.covariance else self.covariance["all"]

    def cov_params(self):
        """Structural covariance parameters on their natural scale."""
        out = {}
        for key, S in self.covariance.items():
            if self.spec.covariance == "compound_symmetry":
                k = S.shape[0]
                d = (S.sum() - np.trace(S)) / (k * (k - 1)) if k > 1 else 0.0
                out[key] = {"d": float(d), "sigma2": float(S[0, 0] - d)}
            elif self.spec.covariance == "independence":
                out[key] = {"sigma2": float(S[0, 0])}
            else:
                out[key] = {"matrix": S.tolist()}
        return out

    def to_record(self):
        return {
            "spec": dataclasses.asdict(self.spec),
            "method": self.method,
            "beta": dict(zip(self.beta_labels, map(float, self.beta))),
            "se_beta": dict(zip(self.beta_labels, map(float, self.se_beta))),
            "covariance": {k: v.tolist() for k, v in self.covariance.items()},
            "cov_params": self.cov_params(),
            "loglik": float(self.loglik),
            "n_params": int(self.n_params),
            "n_subjects": int(self.n_subjects),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
        }


def _design_row(spec, sexes, sex, age):
    gi = sexes.index(sex)
    k = len(spec.occasions)
    if spec.mean == "saturated":
        x = np.zeros(len(sexes) * k)
        x[gi * k + spec.occasions.index(age)] = 1.0
        return x
    ng = len(sexes)
    p = 2 * ng if spec.mean == "separate_lines" else ng + 1
    x = np.zeros(p)
    x[gi] = 1.0
    x[ng + gi if spec.mean == "separate_lines" else ng] = float(age)
    return x


def _optimize(obj, theta0, max_iter=200):
    f = lambda t: -obj(t)
    g = lambda t: -obj.grad(t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(f, theta0, jac=g, method="BFGS", options={"gtol": 1e-7, "maxiter": max_iter * 10})
    theta = res.x
    ll = obj(theta)
    hess_inv = getattr(res, "hess_inv", None)
    # Newton polish on the profiled objective
    for _ in range(30):
        grad = obj.grad(theta)
        if np.max(np.abs(grad)) < 1e-6:
            break
        H = obj.hess(theta)
        try:
            w = np.linalg.eigvalsh(-H)
            if w.min() <= 0:
                break
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-6:
            cand = theta + t * step
            lc = obj(cand)
            # the profiled loglik carries ~1e-11 roundoff on ill-conditioned data
            if lc >= ll - 1e-9:
                theta, ll = cand, lc
                break
            t *= 0.5
        else:
            break
    grad = obj.grad(theta)
    return theta, ll, float(np.max(np.abs(grad))), hess_inv


def fit_gaussian(ds, spec, method="ml", n_starts=5, seed=0):
    """Fit ``spec`` to ``ds`` by direct (restricted) maximum likelihood.

    Converged means a gradient infinity-norm below 1e-6 on the profiled
    objective.  If the moment-based start does not converge, up to
    ``n_starts`` jittered restarts are tried and the best optimum kept.
    """
    if method not in ("ml", "reml"):
        raise ValueError("method must be 'ml' or 'reml'")
    d = build_design(ds, spec)
    cov = CovarianceModel(spec, len(d.sexes))
    obj = _Objective(d, cov, method)
    theta0 = cov.start(_moment_covs(d, cov.G))
    rng = np.random.default_rng(seed)
    best = None
    tried = 0
    for attempt in range(n_starts + 1):
        start = theta0 if attempt == 0 else theta0 + rng.normal(0.0, 0.3, size=theta0.shape)
        if not np.isfinite(obj(start)):
            continue
        tried += 1
        theta, ll, gnorm, hinv = _optimize(obj, start)
        if best is None or ll > best[1] + 1e-9:
            best = (theta, ll, gnorm, hinv)
        if best[2] < 1e-6:
            break
    if best is None:
        raise FitError("no finite starting value")
    theta, ll, gnorm, hinv = best
    covs, _, XtVX, beta, _, _ = obj.terms(theta)
    try:
        V = np.linalg.inv(XtVX)
    except np.linalg.LinAlgError:
        raise FitError("singular information matrix for the mean parameters") from None
    converged = gnorm < 1e-6
    if not converged:
        log.warning("fit did not reach gradient tolerance (|g|=%.2e)", gnorm)
    keys = d.sexes if cov.G > 1 else ("all",)
    return GaussianFit(
        spec=spec,
        method=method,
        beta=beta,
        beta_labels=d.labels,
        se_beta=np.sqrt(np.diag(V)),
        covariance={k: covs[i] for i, k in enumerate(keys)},
        theta=theta,
        theta_labels=cov.labels(d.sexes),
        loglik=float(ll),
        converged=converged,
        n_params=len(beta) + cov.n,
        n_subjects=len(ds),
        sexes=d.sexes,
        grad_norm=gnorm,
        n_starts=tried,
        bfgs_hess_inv=hinv,
        cov_beta=V,
    )


def subject_logliks(ds, spec, beta, theta):
    """Per-subject observed-data log-likelihood at given parameters."""
    d = build_design(ds, spec)
    cov = CovarianceModel(spec, len(d.sexes))
    covs = np.ascontiguousarray(cov.matrices(np.asarray(theta, dtype=float)))
    mu = np.ascontiguousarray(np.einsum("nkp,p->nk", d.X, np.asarray(beta, dtype=float)))
    Y0 = np.ascontiguousarray(np.where(d.mask, d.Y, 0.0))
    return K.mvn_subject_loglik(Y0, np.ascontiguousarray(d.mask.astype(np.uint8)), mu,
                                np.ascontiguousarray(d.group, dtype=np.int64), covs)


def anova_per_time(ds, occasions=AGES):
    """Available-case mean and ``s / sqrt(m)`` per (sex, age) cell.

    Returns ``{(sex, age): (mean, se, m)}``.
    """
    Y, sex = ds.Y, ds.sex
    out = {}
    for g in SEXES:
        rows = sex == g
        if not rows.any():
            continue
        for a in occasions:
            v = Y[rows, AGES.index(a)]
            v = v[~np.isnan(v)]
            if len(v) < 2:
                raise FitError(f"cell ({g}, {a}) has {len(v)} observation(s); SE undefined")
            out[(g, a)] = (float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))), len(v))
    return out


def manova_fit(ds, occasions=AGES):
    """Multivariate ANOVA, which uses complete sequences only."""
    spec = GaussianModelSpec("saturated", "unstructured", occasions=occasions)
    return fit_gaussian(apply_cc(ds), spec, method="reml")


def profiles(fit, ds):
    """Observed (available-case) and fitted mean curves per sex.

    Returns ``{"ages": tuple, "observed": {sex: array}, "fitted": {sex: array}}``.
    """
    occ = fit.spec.occasions
    cols = [AGES.index(a) for a in occ]
    obs = {g: m[cols] for g, m in ds.cell_means().items() if g in fit.sexes}
    fitted = {g: np.array([fit.mean(g, a) for a in occ]) for g in fit.sexes}
    return {"ages": occ, "observed": obs, "fitted": fitted}


@dataclasses.dataclass(frozen=True)
class BivariateSample:
    y1: np.ndarray
    y2: np.ndarray  # NaN where the second measurement is absent

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y2 = np.asarray(self.y2, dtype=float)
        if y1.shape != y2.shape or y1.ndim != 1:
            raise ValueError("y1 and y2 must be 1-D arrays of equal length")
        if np.isnan(y1).any():
            raise ValueError("the first measurement must always be observed")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)

    @property
    def d(self):
        return int((~np.isnan(self.y2)).sum())


@dataclasses.dataclass(frozen=True)
class BivariateEstimate:
    mu1: float
    mu2: float
    s11: float
    s12: float
    s22: float
    mu2_available: float  # completers' mean of y2
    slope: float


def bivariate_mle(s):
    """Closed-form MLE for a bivariate normal with dropout after occasion 1.

    The completers' regression of y2 on y1 corrects the completers' mean
    of y2 for the dropouts' first measurements.  Variances use ML divisors.
    """
    obs = ~np.isnan(s.y2)
    d, N = int(obs.sum()), len(s.y1)
    if d < 2:
        raise ValueError("need at least two complete pairs")
    y1c, y2c = s.y1[obs], s.y2[obs]
    y1bar, y2bar = y1c.mean(), y2c.mean()
    sxx = ((y1c - y1bar) ** 2).mean()
    if sxx <= 0:
        raise ValueError("zero variance among completers' first measurements")
    slope = ((y1c - y1bar) * (y2c - y2bar)).mean() / sxx
    resid_var = ((y2c - y2bar - slope * (y1c - y1bar)) ** 2).mean()
    mu2 = (y2c.sum() + (y2bar + slope * (s.y1[~obs] - y1bar)).sum()) / N
    mu1 = s.y1.mean()
    s11 = ((s.y1 - mu1) ** 2).mean()
    return BivariateEstimate(
        mu1=float(mu1),
        mu2=float(mu2),
        s11=float(s11),
        s12=float(slope * s11),
        s22=float(resid_var + slope ** 2 * s11),
        mu2_available=float(y2bar),
        slope=float(slope),
    )
