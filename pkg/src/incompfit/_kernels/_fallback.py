"""Pure numpy implementations of the numerical kernels.

These are the reference versions; the compiled module in ``_core.pyx`` must
agree with them to rounding error.
"""
from __future__ import annotations

import numpy as np


def _softmax(eta):
    e = np.exp(eta - eta.max())
    return e / e.sum()


def cell_probs(X, theta, offset):
    return _softmax(X @ theta + offset)


def brd_loglik_grad(X, obs_index, z, theta, offset):
    """Observed-data multinomial loglik and its gradient for a log-linear
    model of the full table whose cells collapse onto ``obs_index``."""
    nu = _softmax(X @ theta + offset)
    P = np.bincount(obs_index, weights=nu, minlength=z.shape[0])
    pos = z > 0
    if np.any(P[pos] <= 0.0):
        return -np.inf, np.zeros_like(theta)
    ll = float(z[pos] @ np.log(P[pos]))
    w = np.where(pos, z / np.where(P > 0, P, 1.0), 0.0)[obs_index] * nu
    xbar = nu @ X
    grad = w @ X - w.sum() * xbar
    return ll, grad


def _mstep(X, m, theta, offset, max_newton):
    N = m.sum()
    for _ in range(max_newton):
        nu = _softmax(X @ theta + offset)
        g = X.T @ (m - N * nu)
        if np.max(np.abs(g)) < 1e-10 * max(N, 1.0):
            break
        Xc = X - nu @ X
        H = N * (Xc.T * nu) @ Xc
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        # step halving keeps the complete-data objective monotone
        f0 = m @ np.log(np.maximum(nu, 1e-300))
        t = 1.0
        while t > 1e-8:
            cand = theta + t * step
            f1 = m @ np.log(np.maximum(_softmax(X @ cand + offset), 1e-300))
            if f1 >= f0 - 1e-12:
                theta = cand
                break
            t *= 0.5
        else:
            break
    return theta


def brd_em(X, obs_index, z, theta, offset, max_iter, tol, max_newton=25):
    """EM for the log-linear full-table model given collapsed counts.

    Returns ``(theta, loglik, n_iter)``; stops once the observed-data
    loglik improves by less than ``tol``.
    """
    theta = np.array(theta, dtype=float)
    ll_old = -np.inf
    it = 0
    for it in range(1, max_iter + 1):
        nu = _softmax(X @ theta + offset)
        P = np.bincount(obs_index, weights=nu, minlength=z.shape[0])
        m = np.where(P[obs_index] > 0, z[obs_index] * nu / np.where(P > 0, P, 1.0)[obs_index], 0.0)
        theta = _mstep(X, m, theta, offset, max_newton)
        ll, _ = brd_loglik_grad(X, obs_index, z, theta, offset)
        if abs(ll - ll_old) < tol:
            break
        ll_old = ll
    ll, _ = brd_loglik_grad(X, obs_index, z, theta, offset)
    return theta, ll, it


def _patterns(mask, group):
    keys = {}
    for i in range(mask.shape[0]):
        keys.setdefault((mask[i].tobytes(), int(group[i])), []).append(i)
    return keys.values()


def mvn_gls_terms(Y, mask, Xd, group, covs):
    """Accumulate GLS cross-products over subjects.

    Returns ``(logdet, XtVX, XtVy, ytVy, n_obs)`` where every sum runs over
    the observed sub-vectors with the matching sub-covariance.
    """
    mask = np.asarray(mask, dtype=bool)
    p = Xd.shape[2]
    XtVX = np.zeros((p, p))
    XtVy = np.zeros(p)
    ytVy = 0.0
    logdet = 0.0
    n_obs = 0
    for rows in _patterns(mask, group):
        rows = np.asarray(rows)
        o = mask[rows[0]]
        S = covs[group[rows[0]]][np.ix_(o, o)]
        L = np.linalg.cholesky(S)
        Xo = Xd[rows][:, o, :]
        yo = Y[rows][:, o]
        W = np.linalg.solve(L, Xo)
        u = np.linalg.solve(L, yo[..., None])[..., 0]
        XtVX += np.einsum("nqa,nqb->ab", W, W)
        XtVy += np.einsum("nqa,nq->a", W, u)
        ytVy += float((u * u).sum())
        logdet += len(rows) * 2.0 * np.log(np.diag(L)).sum()
        n_obs += len(rows) * int(o.sum())
    return logdet, XtVX, XtVy, ytVy, n_obs


def mvn_subject_loglik(Y, mask, mu, group, covs):
    mask = np.asarray(mask, dtype=bool)
    out = np.empty(Y.shape[0])
    for rows in _patterns(mask, group):
        rows = np.asarray(rows)
        o = mask[rows[0]]
        S = covs[group[rows[0]]][np.ix_(o, o)]
        L = np.linalg.cholesky(S)
        r = (Y[rows] - mu[rows])[:, o]
        u = np.linalg.solve(L, r[..., None])[..., 0]
        q = int(o.sum())
        out[rows] = -0.5 * (q * np.log(2 * np.pi) + 2.0 * np.log(np.diag(L)).sum() + (u * u).sum(axis=1))
    return out
