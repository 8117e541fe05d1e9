"""Independent reference computations shared by the test modules."""
import numpy as np
from scipy import optimize

from incompfit.gaussian import BivariateSample


def numeric_bivariate_mle(s):
    """Direct numerical maximization of the observed-data likelihood."""
    y1, y2 = s.y1, s.y2
    obs = ~np.isnan(y2)

    def nll(p):
        m1, m2, l11, l21, l22 = p
        L = np.array([[np.exp(l11), 0.0], [l21, np.exp(l22)]])
        S = L @ L.T
        r = np.column_stack([y1[obs] - m1, y2[obs] - m2])
        Si = np.linalg.inv(S)
        v = 0.5 * (obs.sum() * np.log(np.linalg.det(S)) + np.einsum("ni,ij,nj->", r, Si, r))
        r1 = y1[~obs] - m1
        v += 0.5 * ((~obs).sum() * np.log(S[0, 0]) + (r1 ** 2).sum() / S[0, 0])
        return v

    x0 = np.array([y1.mean(), np.nanmean(y2), np.log(y1.std()), 0.0, np.log(np.nanstd(y2))])
    x = optimize.minimize(nll, x0, method="BFGS", options={"gtol": 1e-9, "maxiter": 10000}).x
    for _ in range(4):  # Newton polish with central differences
        E = np.eye(5)
        g = np.array([(nll(x + 1e-6 * e) - nll(x - 1e-6 * e)) / 2e-6 for e in E])
        h = 1e-4
        H = np.array([[(nll(x + h * a + h * b) - nll(x + h * a - h * b) - nll(x - h * a + h * b)
                        + nll(x - h * a - h * b)) / (4 * h * h) for b in E] for a in E])
        x = x - np.linalg.solve(H, g)
    m1, m2, l11, l21, l22 = x
    L = np.array([[np.exp(l11), 0.0], [l21, np.exp(l22)]])
    S = L @ L.T
    return m1, m2, S[0, 0], S[0, 1], S[1, 1]


def random_bivariate(rng):
    n = int(rng.integers(8, 40))
    d = int(rng.integers(3, n + 1))
    rho = rng.uniform(-0.9, 0.9)
    y = rng.multivariate_normal([rng.normal(), rng.normal()], [[1.0, rho], [rho, 1.0]], size=n) * rng.uniform(0.5, 3)
    y2 = y[:, 1].copy()
    y2[d:] = np.nan
    return BivariateSample(y[:, 0], y2)


def em_pi2(t, tol=1e-15):
    """Independent EM for a 2x2 table with the second answer missing."""
    p = np.full((2, 2), 0.25)
    z = t.z11
    for _ in range(100000):
        m = z + t.z10[:, None] * p / p.sum(1, keepdims=True)
        new = m / m.sum()
        if np.abs(new - p).max() < tol:
            p = new
            break
        p = new
    return p[:, 0].sum()
