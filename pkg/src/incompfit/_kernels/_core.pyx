# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Signatures and results mirror ``_fallback``."""
import numpy as np
from libc.math cimport exp, log, sqrt, fabs, INFINITY


cdef void _softmax(const double[:, ::1] X, const double[::1] theta,
                   const double[::1] offset, double[::1] nu) noexcept nogil:
    cdef Py_ssize_t c, a, C = X.shape[0], m = X.shape[1]
    cdef double s, mx = -INFINITY
    for c in range(C):
        s = offset[c]
        for a in range(m):
            s += X[c, a] * theta[a]
        nu[c] = s
        if s > mx:
            mx = s
    s = 0.0
    for c in range(C):
        nu[c] = exp(nu[c] - mx)
        s += nu[c]
    for c in range(C):
        nu[c] /= s


def cell_probs(const double[:, ::1] X, const double[::1] theta, const double[::1] offset):
    nu = np.empty(X.shape[0])
    _softmax(X, theta, offset, nu)
    return nu


cdef double _loglik_grad(const double[:, ::1] X, const long[::1] obs, const double[::1] z,
                         double[::1] nu, double[::1] P, double[::1] grad) noexcept nogil:
    # nu must already hold the cell probabilities
    cdef Py_ssize_t c, a, o, C = X.shape[0], m = X.shape[1], K = z.shape[0]
    cdef double ll = 0.0, w, wsum = 0.0, xbar
    for o in range(K):
        P[o] = 0.0
    for c in range(C):
        P[obs[c]] += nu[c]
    for o in range(K):
        if z[o] > 0:
            if P[o] <= 0.0:
                return -INFINITY
            ll += z[o] * log(P[o])
    for a in range(m):
        grad[a] = 0.0
    for c in range(C):
        o = obs[c]
        if z[o] > 0:
            w = z[o] / P[o] * nu[c]
            wsum += w
            for a in range(m):
                grad[a] += w * X[c, a]
    for a in range(m):
        xbar = 0.0
        for c in range(C):
            xbar += nu[c] * X[c, a]
        grad[a] -= wsum * xbar
    return ll


def brd_loglik_grad(const double[:, ::1] X, const long[::1] obs_index, const double[::1] z,
                    const double[::1] theta, const double[::1] offset):
    cdef double[::1] nu = np.empty(X.shape[0])
    cdef double[::1] P = np.empty(z.shape[0])
    grad = np.zeros(X.shape[1])
    cdef double[::1] g = grad
    _softmax(X, theta, offset, nu)
    cdef double ll = _loglik_grad(X, obs_index, z, nu, P, g)
    if ll == -INFINITY:
        return -np.inf, np.zeros(X.shape[1])
    return ll, grad


cdef int _cholesky_solve(double[:, ::1] H, double[::1] b, int m) noexcept nogil:
    # in-place Cholesky of H (lower), then b <- H^{-1} b; returns 0 on failure
    cdef int i, j, k
    cdef double s
    for j in range(m):
        s = H[j, j]
        for k in range(j):
            s -= H[j, k] * H[j, k]
        if s <= 0.0:
            return 0
        H[j, j] = sqrt(s)
        for i in range(j + 1, m):
            s = H[i, j]
            for k in range(j):
                s -= H[i, k] * H[j, k]
            H[i, j] = s / H[j, j]
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= H[i, k] * b[k]
        b[i] = s / H[i, i]
    for i in range(m - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, m):
            s -= H[k, i] * b[k]
        b[i] = s / H[i, i]
    return 1


cdef double _complete_obj(const double[::1] m_c, const double[::1] nu, Py_ssize_t C) noexcept nogil:
    cdef double f = 0.0
    cdef Py_ssize_t c
    for c in range(C):
        if m_c[c] > 0:
            f += m_c[c] * log(nu[c] if nu[c] > 1e-300 else 1e-300)
    return f


def brd_em(const double[:, ::1] X, const long[::1] obs_index, const double[::1] z,
           theta0, const double[::1] offset, int max_iter, double tol, int max_newton=25):
    cdef Py_ssize_t C = X.shape[0], m = X.shape[1], K = z.shape[0]
    theta_arr = np.array(theta0, dtype=float)
    cdef double[::1] theta = theta_arr
    cdef double[::1] cand = np.empty(m)
    cdef double[::1] nu = np.empty(C)
    cdef double[::1] P = np.empty(K)
    cdef double[::1] mc = np.empty(C)
    cdef double[::1] g = np.empty(m)
    cdef double[::1] xbar = np.empty(m)
    cdef double[:, ::1] H = np.empty((m, m))
    cdef double ll = -INFINITY, ll_old = -INFINITY, N, f0, f1, t, gmax
    cdef int it = 0, nt, ok
    cdef Py_ssize_t c, a, b, o
    with nogil:
        for it in range(1, max_iter + 1):
            _softmax(X, theta, offset, nu)
            for o in range(K):
                P[o] = 0.0
            for c in range(C):
                P[obs_index[c]] += nu[c]
            N = 0.0
            for c in range(C):
                o = obs_index[c]
                mc[c] = z[o] * nu[c] / P[o] if P[o] > 0 else 0.0
                N += mc[c]
            for nt in range(max_newton):
                _softmax(X, theta, offset, nu)
                gmax = 0.0
                for a in range(m):
                    xbar[a] = 0.0
                    for c in range(C):
                        xbar[a] += nu[c] * X[c, a]
                for a in range(m):
                    g[a] = 0.0
                    for c in range(C):
                        g[a] += (mc[c] - N * nu[c]) * X[c, a]
                    if fabs(g[a]) > gmax:
                        gmax = fabs(g[a])
                if gmax < 1e-10 * (N if N > 1.0 else 1.0):
                    break
                for a in range(m):
                    for b in range(a + 1):
                        f0 = 0.0
                        for c in range(C):
                            f0 += nu[c] * (X[c, a] - xbar[a]) * (X[c, b] - xbar[b])
                        H[a, b] = N * f0
                        H[b, a] = N * f0
                ok = _cholesky_solve(H, g, <int>m)
                if not ok:
                    break
                f0 = _complete_obj(mc, nu, C)
                t = 1.0
                ok = 0
                while t > 1e-8:
                    for a in range(m):
                        cand[a] = theta[a] + t * g[a]
                    _softmax(X, cand, offset, nu)
                    f1 = _complete_obj(mc, nu, C)
                    if f1 >= f0 - 1e-12:
                        for a in range(m):
                            theta[a] = cand[a]
                        ok = 1
                        break
                    t *= 0.5
                if not ok:
                    break
            _softmax(X, theta, offset, nu)
            ll = _loglik_grad(X, obs_index, z, nu, P, g)
            if fabs(ll - ll_old) < tol:
                break
            ll_old = ll
    _softmax(X, theta, offset, nu)
    ll = _loglik_grad(X, obs_index, z, nu, P, g)
    return theta_arr, (ll if ll != -INFINITY else -np.inf), it


cdef int _chol(double[:, ::1] S, int q) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for j in range(q):
        s = S[j, j]
        for k in range(j):
            s -= S[j, k] * S[j, k]
        if s <= 0.0:
            return 0
        S[j, j] = sqrt(s)
        for i in range(j + 1, q):
            s = S[i, j]
            for k in range(j):
                s -= S[i, k] * S[j, k]
            S[i, j] = s / S[j, j]
    return 1


cdef void _forward(const double[:, ::1] L, double[::1] v, int q) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(q):
        s = v[i]
        for k in range(i):
            s -= L[i, k] * v[k]
        v[i] = s / L[i, i]


def mvn_gls_terms(const double[:, ::1] Y, const unsigned char[:, ::1] mask,
                  const double[:, :, ::1] Xd, const long[::1] group, const double[:, :, ::1] covs):
    cdef Py_ssize_t n = Y.shape[0], k = Y.shape[1], p = Xd.shape[2]
    cdef Py_ssize_t i, a, b, r, s
    cdef int q, ok = 1
    cdef long[::1] idx = np.empty(k, dtype=np.int64)
    cdef double[:, ::1] L = np.empty((k, k))
    cdef double[:, ::1] W = np.empty((p, k))
    cdef double[::1] u = np.empty(k)
    XtVX_arr = np.zeros((p, p))
    XtVy_arr = np.zeros(p)
    cdef double[:, ::1] XtVX = XtVX_arr
    cdef double[::1] XtVy = XtVy_arr
    cdef double ytVy = 0.0, logdet = 0.0, acc
    cdef long n_obs = 0
    with nogil:
        for i in range(n):
            q = 0
            for r in range(k):
                if mask[i, r]:
                    idx[q] = r
                    q += 1
            if q == 0:
                continue
            n_obs += q
            for r in range(q):
                for s in range(r + 1):
                    L[r, s] = covs[group[i], idx[r], idx[s]]
                    L[s, r] = L[r, s]
            if not _chol(L, q):
                ok = 0
                break
            for r in range(q):
                logdet += 2.0 * log(L[r, r])
                u[r] = Y[i, idx[r]]
            _forward(L, u, q)
            for a in range(p):
                for r in range(q):
                    W[a, r] = Xd[i, idx[r], a]
                _forward(L, W[a], q)
            for r in range(q):
                ytVy += u[r] * u[r]
            for a in range(p):
                acc = 0.0
                for r in range(q):
                    acc += W[a, r] * u[r]
                XtVy[a] += acc
                for b in range(a + 1):
                    acc = 0.0
                    for r in range(q):
                        acc += W[a, r] * W[b, r]
                    XtVX[a, b] += acc
    if not ok:
        raise np.linalg.LinAlgError("sub-covariance not positive definite")
    for a in range(p):
        for b in range(a):
            XtVX[b, a] = XtVX[a, b]
    return logdet, XtVX_arr, XtVy_arr, ytVy, int(n_obs)


def mvn_subject_loglik(const double[:, ::1] Y, const unsigned char[:, ::1] mask,
                       const double[:, ::1] mu, const long[::1] group, const double[:, :, ::1] covs):
    cdef Py_ssize_t n = Y.shape[0], k = Y.shape[1]
    cdef Py_ssize_t i, r, s
    cdef int q, ok = 1
    cdef long[::1] idx = np.empty(k, dtype=np.int64)
    cdef double[:, ::1] L = np.empty((k, k))
    cdef double[::1] u = np.empty(k)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double acc, LOG2PI = 1.8378770664093453
    with nogil:
        for i in range(n):
            q = 0
            for r in range(k):
                if mask[i, r]:
                    idx[q] = r
                    q += 1
            for r in range(q):
                for s in range(r + 1):
                    L[r, s] = covs[group[i], idx[r], idx[s]]
                    L[s, r] = L[r, s]
            if not _chol(L, q):
                ok = 0
                break
            acc = q * LOG2PI
            for r in range(q):
                acc += 2.0 * log(L[r, r])
                u[r] = Y[i, idx[r]] - mu[i, idx[r]]
            _forward(L, u, q)
            for r in range(q):
                acc += u[r] * u[r]
            out[i] = -0.5 * acc
    if not ok:
        raise np.linalg.LinAlgError("sub-covariance not positive definite")
    return out_arr
