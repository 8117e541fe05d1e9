"""Model checking for Gaussian fits: simulated-versus-augmented summaries
and likelihood-ratio tests.

Randomness: every replicate draws from its own ``numpy`` PCG64 generator
seeded with ``SeedSequence([seed, stream, index])``, where stream 0 is used
for simulated datasets and stream 1 for augmentations.  Results therefore
do not depend on the order in which replicates are generated.
"""
from __future__ import annotations

import dataclasses
import io

import numpy as np
from scipy import stats

from .datasets import AGES, SEXES, GrowthDataset
from .gaussian import GaussianFit

SIM_STREAM, AUG_STREAM = 0, 1


def replicate_rng(seed, stream, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream, int(index)])))


def cell_summary(Y, sex, occasions=AGES):
    """Per-(sex, age) mean and SD (``ddof=1``) of a complete data matrix."""
    out = {}
    for g in SEXES:
        rows = Y[sex == g]
        if len(rows) == 0:
            continue
        for c, a in enumerate(occasions):
            v = rows[:, c]
            out[(g, a)] = (float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else float("nan"))
    return out


@dataclasses.dataclass
class PpcResult:
    sim_summaries: list        # n_sims dicts {(sex, age): (mean, sd)}
    augmented_summary: list    # n_augment dicts
    augmented_data: list       # n_augment completed (n, k) matrices
    n_sims: int
    n_augment: int
    seed: int

    def envelope(self, sex, age):
        """Simulated means for one cell, sorted ascending."""
        return np.sort([s[(sex, age)][0] for s in self.sim_summaries])

    def rank(self, sex, age, replicate=0):
        """Number of simulated means strictly below the augmented mean."""
        a = self.augmented_summary[replicate][(sex, age)][0]
        return int(np.sum(self.envelope(sex, age) < a))

    def to_csv(self):
        """Long format: replicate, kind, sex, age, mean, sd."""
        buf = io.StringIO()
        buf.write("replicate,kind,sex,age,mean,sd\n")
        for kind, rows in (("simulated", self.sim_summaries), ("augmented", self.augmented_summary)):
            for r, s in enumerate(rows):
                for (g, a), (m, sd) in s.items():
                    buf.write(f"{r},{kind},{g},{a},{m:.6f},{sd:.6f}\n")
        return buf.getvalue()


def _moments(fit, ds):
    occ = fit.spec.occasions
    mu = np.array([[fit.mean(g, a) for a in occ] for g in ds.sex])
    covs = [fit.cov_matrix(g) for g in ds.sex]
    return mu, covs


def conditional_normal(mu, S, y, obs):
    """Mean and covariance of the missing part given the observed part."""
    mis = ~obs
    if not obs.any():
        return mu[mis], S[np.ix_(mis, mis)]
    Soo = S[np.ix_(obs, obs)]
    Smo = S[np.ix_(mis, obs)]
    try:
        c = np.linalg.cholesky(Soo)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("observed-part covariance is not positive definite") from None
    W = np.linalg.solve(c.T, np.linalg.solve(c, Smo.T)).T
    m = mu[mis] + W @ (y[obs] - mu[obs])
    C = S[np.ix_(mis, mis)] - W @ Smo.T
    return m, 0.5 * (C + C.T)


def ppc_run(ds: GrowthDataset, fit: GaussianFit, n_sims=20, n_augment=1, seed=0, summary=cell_summary):
    """Simulate complete datasets from ``fit`` and complete ``ds`` by draws
    from the fitted conditional normal of missing given observed values.

    ``summary(Y, sex, occasions)`` maps a complete matrix to a record;
    the same function is applied to simulated and augmented data.
    """
    if not fit.converged:
        raise ValueError("fit did not converge")
    occ = fit.spec.occasions
    cols = [AGES.index(a) for a in occ]
    Y = ds.Y[:, cols]
    mask = ds.mask[:, cols]
    sex = ds.sex
    mu, covs = _moments(fit, ds)
    chol = [np.linalg.cholesky(S) for S in covs]
    sims = []
    for r in range(n_sims):
        rng = replicate_rng(seed, SIM_STREAM, r)
        Z = rng.standard_normal(mu.shape)
        Ys = mu + np.einsum("nij,nj->ni", np.array(chol), Z)
        sims.append(summary(Ys, sex, occ))
    augs, data = [], []
    for a in range(n_augment):
        rng = replicate_rng(seed, AUG_STREAM, a)
        Ya = Y.copy()
        for i in range(len(Y)):
            if mask[i].all():
                continue
            m, C = conditional_normal(mu[i], covs[i], Y[i], mask[i])
            try:
                L = np.linalg.cholesky(C)
            except np.linalg.LinAlgError:
                raise np.linalg.LinAlgError(f"conditional covariance of subject {ds.ids[i]} is not positive definite") from None
            Ya[i, ~mask[i]] = m + L @ rng.standard_normal(len(m))
        augs.append(summary(Ya, sex, occ))
        data.append(Ya)
    return PpcResult(sims, augs, data, n_sims, n_augment, seed)


# -- likelihood-ratio test -----------------------------------------------------

_MEAN_ORDER = {"parallel_lines": 0, "separate_lines": 1, "saturated": 2}
_COV_ORDER = {"independence": 0, "compound_symmetry": 1, "unstructured": 2}


def nested(s0, s1):
    """True if ``s0`` is a special case of ``s1``."""
    if s0.occasions != s1.occasions:
        return False
    if _MEAN_ORDER[s0.mean] > _MEAN_ORDER[s1.mean]:
        return False
    if _COV_ORDER[s0.covariance] > _COV_ORDER[s1.covariance]:
        return False
    if s0.group_specific and not s1.group_specific:
        return False
    return True


@dataclasses.dataclass(frozen=True)
class LrtResult:
    stat: float
    df: int
    p: float


def lrt(fit0: GaussianFit, fit1: GaussianFit):
    """Likelihood-ratio test of ``fit0`` within ``fit1``.

    Both fits must come from the same data and method.  REML fits are
    accepted only when the mean structures agree, since restricted
    likelihoods with different fixed effects are not comparable.
    """
    if fit0.method != fit1.method:
        raise ValueError("fits use different estimation methods")
    if fit0.n_subjects != fit1.n_subjects:
        raise ValueError("fits use different data")
    if not nested(fit0.spec, fit1.spec):
        raise ValueError("first model is not nested in the second")
    if fit0.method == "reml" and fit0.spec.mean != fit1.spec.mean:
        raise ValueError("REML likelihoods with different mean structures are not comparable")
    df = fit1.n_params - fit0.n_params
    stat = max(2.0 * (fit1.loglik - fit0.loglik), 0.0)
    p = 1.0 if df == 0 else float(stats.chi2.sf(stat, df))
    return LrtResult(float(stat), int(df), p)


def variance_decomposition(fit: GaussianFit):
    """Between-subject ``d`` and within-subject ``sigma2`` per sex."""
    if fit.spec.covariance != "compound_symmetry":
        raise ValueError("variance decomposition needs a compound-symmetry fit")
    if not fit.spec.group_specific:
        raise ValueError("fit is not group-specific")
    return {g: (v["d"], v["sigma2"]) for g, v in fit.cov_params().items()}
