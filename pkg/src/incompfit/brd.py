"""Baker-Rosenberger-DerSimonian models for an incomplete 2x2 table.

The full table has 16 cells ``nu[r, j, k]`` with response pattern ``r`` in
(11, 10, 01, 00) (1 = answered) and answers ``j`` (independence) and ``k``
(attendance), index 0 meaning "yes".  Incomplete patterns are modelled as
multiplicative modifications of the completers' cells::

    nu10 = nu11 * beta,   nu01 = nu11 * alpha,   nu00 = nu11 * alpha * beta * gamma

with ``alpha`` and ``beta`` constant or depending on ``j``, ``k`` or both.
On the log scale this is a log-linear model, so every fit is parameterized
by an unconstrained coefficient vector and cell probabilities stay positive.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings

import numpy as np
from scipy import optimize, stats

from . import _kernels as K

log = logging.getLogger(__name__)

PATTERNS = ("11", "10", "01", "00")
_R = {"11": (1, 1), "10": (1, 0), "01": (0, 1), "00": (0, 0)}
DEPS = ("constant", "row", "col", "both", "additive")
BOUNDARY = 30.0        # |log-scale coefficient| treated as infinite
MIN_EXPECTED = 1e-6    # fitted observable count treated as zero
N_OBSERVABLE = 8  # free observable-cell probabilities


def _obs_index():
    idx = np.empty(16, dtype=np.int64)
    for p, pat in enumerate(PATTERNS):
        for j in range(2):
            for k in range(2):
                c = p * 4 + j * 2 + k
                idx[c] = {"11": j * 2 + k, "10": 4 + j, "01": 6 + k, "00": 8}[pat]
    return idx


OBS_INDEX = _obs_index()


class BoundaryError(ArithmeticError):
    """Delta-method interval unavailable: fit on or near the boundary."""


@dataclasses.dataclass(frozen=True)
class BrdSpec:
    alpha_dep: str = "constant"
    beta_dep: str = "constant"
    name: str = ""

    def __post_init__(self):
        for dep in (self.alpha_dep, self.beta_dep):
            if dep not in DEPS:
                raise ValueError(f"dependence must be one of {DEPS}")

    @property
    def n_alpha(self):
        return _n_dep(self.alpha_dep)

    @property
    def n_beta(self):
        return _n_dep(self.beta_dep)

    @property
    def df(self):
        return 3 + self.n_alpha + self.n_beta + 1

    @property
    def label(self):
        return self.name or f"(alpha:{self.alpha_dep}, beta:{self.beta_dep})"


def _n_dep(dep):
    return {"constant": 1, "row": 2, "col": 2, "both": 4, "additive": 3}[dep]


def _dep_row(dep, j, k):
    if dep == "constant":
        return [1.0]
    if dep == "row":
        return [1.0 - j, float(j)]
    if dep == "col":
        return [1.0 - k, float(k)]
    if dep == "both":
        v = [0.0] * 4
        v[j * 2 + k] = 1.0
        return v
    # additive on the log scale, "yes" as reference level
    return [1.0, float(j), float(k)]


BRD_MODELS = {
    "BRD1": BrdSpec("constant", "constant", "BRD1"),
    "BRD2": BrdSpec("constant", "row", "BRD2"),
    "BRD3": BrdSpec("col", "constant", "BRD3"),
    "BRD4": BrdSpec("constant", "col", "BRD4"),
    "BRD5": BrdSpec("row", "constant", "BRD5"),
    "BRD6": BrdSpec("row", "row", "BRD6"),
    "BRD7": BrdSpec("col", "col", "BRD7"),
    "BRD8": BrdSpec("row", "col", "BRD8"),
    "BRD9": BrdSpec("col", "row", "BRD9"),
}


def brd_spec(name):
    try:
        return BRD_MODELS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown BRD model {name!r}") from None


def design_matrix(spec):
    """``(16, m)`` design and coefficient labels.

    Columns: three completer log-odds against the (yes, yes) cell, then
    log alpha, log beta and log gamma coefficients.
    """
    na, nb = spec.n_alpha, spec.n_beta
    X = np.zeros((16, 3 + na + nb + 1))
    for p, pat in enumerate(PATTERNS):
        r1, r2 = _R[pat]
        for j in range(2):
            for k in range(2):
                c = p * 4 + j * 2 + k
                if j * 2 + k > 0:
                    X[c, j * 2 + k - 1] = 1.0
                if r1 == 0:
                    X[c, 3:3 + na] = _dep_row(spec.alpha_dep, j, k)
                if r2 == 0:
                    X[c, 3 + na:3 + na + nb] = _dep_row(spec.beta_dep, j, k)
                if r1 == 0 and r2 == 0:
                    X[c, -1] = 1.0
    labels = ["lambda_yn", "lambda_ny", "lambda_nn"]
    labels += [f"log_alpha{s}" for s in _dep_suffixes(spec.alpha_dep)]
    labels += [f"log_beta{s}" for s in _dep_suffixes(spec.beta_dep)]
    labels += ["log_gamma"]
    return X, labels


def _dep_suffixes(dep):
    return {
        "constant": [""],
        "row": ["_j=yes", "_j=no"],
        "col": ["_k=yes", "_k=no"],
        "both": ["_yy", "_yn", "_ny", "_nn"],
        "additive": ["_0", "_j", "_k"],
    }[dep]


def observed_probs(table):
    """Collapse a ``(4, 2, 2)`` full table to the nine observable cells."""
    return np.bincount(OBS_INDEX, weights=np.asarray(table).ravel(), minlength=9)


def theta_of(table):
    """Proportion answering yes to both questions, summed over patterns."""
    return float(np.asarray(table)[:, 0, 0].sum())


def observed_loglik(table, t):
    """Multinomial log-likelihood (no constant) of the nine observable cells."""
    z = t.observed_vector()
    P = observed_probs(table)
    pos = z > 0
    if np.any(P[pos] <= 0):
        return -np.inf
    return float(z[pos] @ np.log(P[pos]))


@dataclasses.dataclass(frozen=True)
class BrdParams:
    """Natural-scale parameters of a fitted full table."""

    nu11: np.ndarray   # (2, 2) completers' cell probabilities
    alpha: np.ndarray  # (2, 2) per-cell alpha
    beta: np.ndarray   # (2, 2) per-cell beta
    gamma: float

    @classmethod
    def from_table(cls, nu):
        nu11 = nu[0]
        alpha = nu[2] / nu11
        beta = nu[1] / nu11
        gamma = float(np.mean(nu[3] / (nu11 * alpha * beta)))
        return cls(nu11, alpha, beta, gamma)

    def table(self):
        n11 = self.nu11
        return np.stack([n11, n11 * self.beta, n11 * self.alpha, n11 * self.alpha * self.beta * self.gamma])


@dataclasses.dataclass
class BrdFit:
    spec: BrdSpec
    coef: np.ndarray          # log-scale coefficients, fixed ones included
    coef_labels: list
    table: np.ndarray         # (4, 2, 2) fitted cell probabilities
    loglik: float
    df: int
    theta: float
    n: float
    boundary: bool
    converged: bool
    fixed: tuple = ()         # indices of coefficients held fixed
    theta_ci: tuple = None
    ci_error: str = ""
    n_em_iter: int = 0

    @property
    def params(self):
        return BrdParams.from_table(self.table)

    @property
    def saturated(self):
        return self.df - len(self.fixed) >= N_OBSERVABLE

    def to_record(self):
        return {
            "model": self.spec.label,
            "df": int(self.df),
            "loglik": float(self.loglik),
            "theta": float(self.theta),
            "theta_ci": None if self.theta_ci is None else [float(v) for v in self.theta_ci],
            "ci_error": self.ci_error,
            "boundary": bool(self.boundary),
            "converged": bool(self.converged),
            "coef": dict(zip(self.coef_labels, map(float, self.coef))),
            "table": self.table.tolist(),
        }


def _start(t, X, free, offset):
    """Moment-style start: completers' log-odds and pattern-size ratios."""
    z11 = t.z11 + 0.5
    n11, n10, n01, n00 = z11.sum(), t.z10.sum() + 0.5, t.z01.sum() + 0.5, t.z00 + 0.5
    lam = np.log(z11.ravel()[1:] / z11[0, 0])
    # intercept-like start for the missingness factors, zero contrasts
    coef = np.zeros(X.shape[1])
    coef[:3] = lam
    a, b = np.log(n01 / n11), np.log(n10 / n11)
    g = np.log(n00 * n11 / (n10 * n01))
    # level columns of alpha (pattern 01 only) and beta (pattern 10 only)
    # start at the pattern-size ratio; additive contrasts start at zero
    for c in range(3, X.shape[1] - 1):
        col = X[:, c]
        if col[8:12].all() or (col[8:12].any() and _is_level(X, c)):
            coef[c] = a
        elif col[4:8].all() or (col[4:8].any() and _is_level(X, c)):
            coef[c] = b
    coef[-1] = g
    return coef[free]


def _is_level(X, c):
    """True for an indicator column that is not an additive contrast."""
    block = X[4:12]
    others = [i for i in range(3, X.shape[1] - 1) if i != c]
    return not any(np.all(block[:, c] <= block[:, i]) and block[:, i].all() for i in others)


def _grad_fd_hessian(Xf, z, coef, offset, h=1e-6):
    m = len(coef)
    H = np.empty((m, m))
    for a in range(m):
        e = np.zeros(m)
        e[a] = h
        gp = K.brd_loglik_grad(Xf, OBS_INDEX, z, coef + e, offset)[1]
        gm = K.brd_loglik_grad(Xf, OBS_INDEX, z, coef - e, offset)[1]
        H[:, a] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def fit_brd(t, spec, *, fixed=None, start=None, em_tol=1e-8, max_em_iter=20000):
    """Maximum likelihood fit of a BRD-type model to an incomplete table.

    ``fixed`` maps coefficient index to a value held constant (used for the
    sensitivity grids).  EM runs to a loglik change below ``em_tol``, then
    BFGS on the free log-scale coefficients polishes the optimum.
    """
    X, labels = design_matrix(spec)
    fixed = dict(fixed or {})
    free = np.array([i for i in range(X.shape[1]) if i not in fixed], dtype=int)
    offset = np.zeros(16)
    for i, v in fixed.items():
        offset += X[:, i] * v
    Xf, obs, z, offset = K.as_kernel_args(X[:, free], OBS_INDEX, t.observed_vector(), offset)
    c0 = np.asarray(start, dtype=float)[free] if start is not None else _start(t, X, free, offset)
    c, ll_em, n_iter = K.brd_em(Xf, obs, z, c0, offset, max_em_iter, em_tol)

    def f(cf):
        ll, g = K.brd_loglik_grad(Xf, obs, z, cf, offset)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(cf)
        return -ll, -g

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(f, c, jac=True, method="BFGS", options={"gtol": 1e-9, "maxiter": 5000})
    if -res.fun >= ll_em - 1e-12:
        c = res.x
    ll, g = K.brd_loglik_grad(Xf, obs, z, c, offset)
    coef = np.zeros(X.shape[1])
    coef[free] = c
    for i, v in fixed.items():
        coef[i] = v
    nu = K.cell_probs(np.ascontiguousarray(X), coef, np.zeros(16)).reshape(4, 2, 2)
    fit = BrdFit(
        spec=spec,
        coef=coef,
        coef_labels=labels,
        table=nu,
        loglik=float(ll),
        df=spec.df,
        theta=theta_of(nu),
        n=t.n,
        boundary=bool(np.any(np.abs(coef) > BOUNDARY) or np.any(t.n * observed_probs(nu) < MIN_EXPECTED)),
        converged=bool(np.max(np.abs(g)) < 1e-4),
        fixed=tuple(sorted(fixed)),
        n_em_iter=int(n_iter),
    )
    try:
        fit.theta_ci = theta_ci(fit, t)
    except BoundaryError as exc:
        fit.ci_error = str(exc)
    return fit


def theta_se(fit, t):
    """Delta-method standard error of theta from the observed information
    of the free log-scale coefficients."""
    if fit.boundary:
        raise BoundaryError("fit on the parameter boundary; information is singular")
    X, _ = design_matrix(fit.spec)
    free = np.array([i for i in range(X.shape[1]) if i not in fit.fixed], dtype=int)
    offset = X[:, list(fit.fixed)] @ fit.coef[list(fit.fixed)] if fit.fixed else np.zeros(16)
    Xf, _, z, offset = K.as_kernel_args(X[:, free], OBS_INDEX, t.observed_vector(), offset)
    info = -_grad_fd_hessian(Xf, z, fit.coef[free], offset)
    nu = fit.table.ravel()
    J = (nu[:, None] * (Xf - nu @ Xf))
    grad_theta = J[[0, 4, 8, 12]].sum(axis=0)
    try:
        w = np.linalg.eigvalsh(info)
    except np.linalg.LinAlgError:
        raise BoundaryError("information matrix could not be decomposed") from None
    if w.min() <= 1e-10 * max(w.max(), 1.0):
        raise BoundaryError("information matrix is singular")
    var = float(grad_theta @ np.linalg.solve(info, grad_theta))
    if not var > 0:
        raise BoundaryError("non-positive variance for theta")
    return np.sqrt(var)


def theta_ci(fit, t, level=0.95):
    """Delta-method interval for theta on the identity scale."""
    se = theta_se(fit, t)
    q = stats.norm.ppf(0.5 + level / 2)
    return (fit.theta - q * se, fit.theta + q * se)


# -- completed tables ----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class CompletedTable:
    """Sixteen real-valued counts, one 2x2 block per response pattern."""

    cells: np.ndarray  # (4, 2, 2)
    kind: str = "prediction"

    def block(self, pattern):
        return self.cells[PATTERNS.index(pattern)]

    @property
    def total(self):
        return float(self.cells.sum())

    @property
    def theta(self):
        return theta_of(self.cells) / self.total

    def to_csv(self):
        """Rows j=yes/no; per pattern the k=yes and k=no columns."""
        head = ["j"] + [f"{p}_k={lv}" for p in PATTERNS for lv in ("yes", "no")]
        lines = [",".join(head)]
        for j, lv in enumerate(("yes", "no")):
            vals = [f"{self.cells[p, j, k]:.4f}" for p in range(4) for k in range(2)]
            lines.append(",".join([lv] + vals))
        return "\n".join(lines) + "\n"


def predict_complete(fit, n=None):
    """Model prediction of the full table: ``n * nu``."""
    n = fit.n if n is None else n
    return CompletedTable(n * np.asarray(fit.table), "prediction")


class MisfitError(ValueError):
    """Observed count in a cell the model gives probability zero."""


def complete_observed(fit, t):
    """Spread each incomplete count over its missing index with the model's
    conditional probabilities within that pattern; completers are copied."""
    nu = np.asarray(fit.table)
    out = np.zeros((4, 2, 2))
    out[0] = t.z11

    def share(count, probs):
        s = probs.sum()
        if s <= 1e-300:
            if count > 0:
                raise MisfitError("fitted pattern probability is zero but the observed count is positive")
            return np.zeros_like(probs)
        return count * probs / s

    for j in range(2):
        out[1, j, :] = share(t.z10[j], nu[1, j, :])
    for k in range(2):
        out[2, :, k] = share(t.z01[k], nu[2, :, k])
    out[3] = share(t.z00, nu[3])
    return CompletedTable(out, "completion")


# -- MAR counterpart -----------------------------------------------------------

def ignorable_mle(counts, tol=1e-14, max_iter=100000):
    """Joint 2x2 distribution maximizing the ignorable observed-data
    likelihood of nine (possibly fractional) observable counts, by EM."""
    c = np.asarray(counts, dtype=float)
    c11, c10, c01, c00 = c[:4].reshape(2, 2), c[4:6], c[6:8], c[8]
    f = (c11 + 1.0) / (c11 + 1.0).sum()
    for _ in range(max_iter):
        m = c11 + c10[:, None] * f / f.sum(1, keepdims=True) + c01[None, :] * f / f.sum(0, keepdims=True) + c00 * f
        f_new = m / m.sum()
        if np.max(np.abs(f_new - f)) < tol:
            f = f_new
            break
        f = f_new
    return f


@dataclasses.dataclass
class MarCounterpart:
    """Full table agreeing with ``parent`` on the observable cells while the
    missing answers follow MAR given the observed ones."""

    parent: BrdFit
    table: np.ndarray       # (4, 2, 2)
    measurement: np.ndarray  # (2, 2) joint law of the answers
    n: float

    @property
    def theta(self):
        return theta_of(self.table)

    def loglik(self, t):
        return observed_loglik(self.table, t)


def mar_counterpart(fit):
    """MAR counterpart of a fitted BRD model.

    The joint answer distribution is the ignorable (MAR) maximum likelihood
    estimate computed from the parent's fitted observable-cell
    probabilities; each pattern keeps the parent's observable probability
    and splits it over the missing answers by this distribution's
    conditionals.  The result is self-consistent: its own marginal over
    patterns equals the measurement distribution used for the split.
    """
    P = observed_probs(fit.table)
    f = ignorable_mle(P)
    if np.any(f <= 0):
        raise ZeroDivisionError("measurement distribution has a cell of zero mass")
    tab = np.zeros((4, 2, 2))
    tab[0] = P[:4].reshape(2, 2)
    tab[1] = P[4:6][:, None] * f / f.sum(1, keepdims=True)
    tab[2] = P[6:8][None, :] * f / f.sum(0, keepdims=True)
    tab[3] = P[8] * f
    return MarCounterpart(fit, tab, f, fit.n)


# -- goodness of fit -----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GofResult:
    lr: float
    pearson: float
    df: int
    p_lr: float
    p_pearson: float
    neyman: float = float("nan")  # observed counts in the denominator


def gof(fit, t):
    """Likelihood-ratio and Pearson statistics on the nine observable cells
    against the saturated observed-data fit (8 free probabilities)."""
    z = t.observed_vector()
    e = t.n * observed_probs(fit.table)
    if np.any((e < 1e-12) & (z > 0)):
        lr = pearson = neyman = np.inf
    else:
        pos = z > 0
        lr = float(2.0 * np.sum(z[pos] * np.log(z[pos] / e[pos])))
        keep = e >= 1e-12
        pearson = float(np.sum((z[keep] - e[keep]) ** 2 / e[keep]))
        neyman = float(np.sum((z[pos] - e[pos]) ** 2 / z[pos]))
    df = N_OBSERVABLE - (fit.df - len(getattr(fit, "fixed", ())))
    df = max(df, 0)
    if df == 0:
        p_lr = p_pearson = 1.0
    else:
        if getattr(fit, "boundary", False):
            log.warning("chi-squared reference used at a boundary fit")
        p_lr, p_pearson = float(stats.chi2.sf(lr, df)), float(stats.chi2.sf(pearson, df))
    return GofResult(lr, pearson, df, p_lr, p_pearson, neyman)


def saturated_loglik(t):
    z = t.observed_vector()
    pos = z > 0
    return float(z[pos] @ np.log(z[pos] / t.n))


# -- monotone closed form ----------------------------------------------------

def closed_form_pi2(t):
    """Success probabilities for a dropout-only table.

    Returns ``(pi1, pi2, pi2_available)``: the MLE of the first success
    probability, the MLE of the second (dropouts' first answers routed
    through the completers' conditional distribution), and the completers'
    proportion for the second answer.
    """
    if t.z01.sum() > 0 or t.z00 > 0:
        raise ValueError("closed form requires a dropout-only (monotone) table")
    z11, z0 = t.z11, t.z10
    N = t.n
    d = z11.sum()
    if d <= 0:
        raise ValueError("no completers")
    rows = z11.sum(axis=1)
    for j in range(2):
        if rows[j] == 0 and z0[j] > 0:
            raise ZeroDivisionError(f"completer row {j} is empty but has dropouts")
    pi1 = (rows[0] + z0[0]) / N
    cond = np.divide(z11[:, 0], rows, out=np.zeros(2), where=rows > 0)
    pi2 = (z11[:, 0].sum() + z0 @ cond) / N
    return float(pi1), float(pi2), float(z11[:, 0].sum() / d)
