"""Reference implementations used only by the tests.

They are written independently of the package code: plain loops, no shared
helpers, so an error in one cannot hide an error in the other.
"""

import math

import numpy as np


def cd_lasso(D, y, lam, sweeps=50000, tol=1e-14):
    """Cyclic coordinate descent for 0.5*||y - Dc||^2 + lam*||c||_1.

    Keeps the gradient ``G c - D^T y`` up to date with one rank-one update per
    changed coordinate.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    n = D.shape[1]
    G = D.T @ D
    grad = -(D.T @ y)
    diag = [float(G[j, j]) for j in range(n)]
    c = [0.0] * n
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(n):
            if diag[j] == 0.0:
                continue
            old = c[j]
            rho = diag[j] * old - grad[j]
            if rho > lam:
                new = (rho - lam) / diag[j]
            elif rho < -lam:
                new = (rho + lam) / diag[j]
            else:
                new = 0.0
            if new != old:
                grad += G[:, j] * (new - old)
                c[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest <= tol:
            break
    return _polish(G, D.T @ y, np.array(c), lam)


def _objective(G, b, x, lam):
    return 0.5 * x @ G @ x - b @ x + lam * np.abs(x).sum()


def _kkt_ok(G, b, x, lam, tol):
    grad = G @ x - b
    on = x != 0
    return bool(np.all(np.abs(grad[on] + lam * np.sign(x[on])) <= tol)
                and np.all(np.abs(grad[~on]) <= lam + tol))


def _polish(G, b, x, lam, tol=1e-12, rounds=200):
    """Feature-sign refinement of an approximate solution.

    Coordinate descent crawls when columns are nearly collinear.  Starting
    from its answer, repeatedly fix the signs on the support, move toward the
    closed-form minimizer of that quadratic, stop at the best sign-change
    point on the way, and admit the worst KKT violator.  A move is taken only
    if it lowers the objective, so the result is never worse than the input.
    """
    x = x.copy()
    for _ in range(rounds):
        if _kkt_ok(G, b, x, lam, tol):
            return x
        grad = G @ x - b
        viol = np.where(x == 0, np.abs(grad) - lam, -np.inf)
        theta = np.sign(x)
        j = int(np.argmax(viol))
        if viol[j] > tol:
            theta[j] = -np.sign(grad[j])
        S = np.flatnonzero(theta)
        on = np.flatnonzero(x)
        if on.size and np.linalg.matrix_rank(G[np.ix_(on, on)]) < on.size:
            # flat direction of the quadratic: slide along it until a
            # coordinate reaches zero, which lowers the l1 term linearly
            v = np.linalg.svd(G[np.ix_(on, on)])[2][-1]
            if np.sign(x[on]) @ v > 0:
                v = -v
            ratios = [-x[k] / v[q] for q, k in enumerate(on) if v[q] != 0 and -x[k] / v[q] > 0]
            if ratios:
                x = x.copy()
                x[on] += min(ratios) * v
                x[np.abs(x) < 1e-15] = 0.0
                continue
        target = np.zeros_like(x)
        target[S] = np.linalg.lstsq(G[np.ix_(S, S)], b[S] - lam * theta[S], rcond=None)[0]
        d = target - x
        ts = [1.0]
        for k in S:
            if x[k] != 0 and d[k] != 0:
                t = -x[k] / d[k]
                if 0 < t < 1:
                    ts.append(t)
        best, best_f = x, _objective(G, b, x, lam)
        for t in ts:
            cand = x + t * d
            cand[np.abs(cand) < 1e-15] = 0.0
            f = _objective(G, b, cand, lam)
            if f < best_f:
                best, best_f = cand, f
        if best is x:
            return x
        x = best
    return x


def lasso_objective(D, y, c, lam):
    total = 0.0
    for i in range(D.shape[0]):
        s = y[i]
        for j in range(D.shape[1]):
            s -= D[i, j] * c[j]
        total += s * s
    return 0.5 * total + lam * sum(abs(v) for v in c)


def gauss_kernel(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    k = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma)) for j in range(size)]
         for i in range(size)]
    tot = sum(sum(row) for row in k)
    return [[v / tot for v in row] for row in k]


def scalar_ssim(a, b, data_range=1.0, size=11, sigma=1.5):
    """SSIM by explicit loops over every valid window."""
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    H, W = len(a), len(a[0])
    w = gauss_kernel(size, sigma)
    vals = []
    for r in range(H - size + 1):
        for c in range(W - size + 1):
            ma = mb = saa = sbb = sab = 0.0
            for i in range(size):
                for j in range(size):
                    x = a[r + i][c + j]
                    y = b[r + i][c + j]
                    g = w[i][j]
                    ma += g * x
                    mb += g * y
            for i in range(size):
                for j in range(size):
                    dx = a[r + i][c + j] - ma
                    dy = b[r + i][c + j] - mb
                    g = w[i][j]
                    saa += g * dx * dx
                    sbb += g * dy * dy
                    sab += g * dx * dy
            num = (2 * ma * mb + c1) * (2 * sab + c2)
            den = (ma * ma + mb * mb + c1) * (saa + sbb + c2)
            vals.append(num / den)
    return sum(vals) / len(vals)


def naive_mse(a, b):
    s = 0.0
    n = 0
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            s += (x - y) ** 2
            n += 1
    return s / n


def dense_lambda_max(D):
    D = np.asarray(D, dtype=float)
    return float(np.linalg.eigvalsh(D.T @ D)[-1])
