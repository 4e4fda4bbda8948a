"""Pure numpy FISTA used when the compiled kernel is unavailable.

Same contract as ``_fista_ext.fista_kernel``: pixels are rows of ``Yt`` and
each one stops independently once its step falls below ``tol``.
"""

import numpy as np


def fista_kernel(D, Dt, A, Yt, lam, lipschitz, max_iter, tol, num_threads=1):
    P = Yt.shape[0]
    N = D.shape[1]
    inv_l = 1.0 / lipschitz
    thr = lam / lipschitz
    out = np.zeros((N, P))
    iters = np.zeros(P, dtype=np.intc)
    # working set holds only the pixels that have not converged yet
    idx = np.arange(P)
    Y = np.ascontiguousarray(Yt.T)  # T x P
    B = inv_l * (Dt @ Y) if A is not None else None
    C = np.zeros((N, P))
    Z = np.zeros((N, P))
    s = 1.0
    for it in range(1, max_iter + 1):
        if idx.size == 0:
            break
        if A is not None:
            G = A @ Z + B
        else:
            G = Z - Dt @ ((D @ Z - Y) * inv_l)
        c_new = np.maximum(G - thr, 0.0) + np.minimum(G + thr, 0.0)
        s_new = (1.0 + np.sqrt(1.0 + 4.0 * s * s)) / 2.0
        beta = (s - 1.0) / s_new
        delta = c_new - C
        Z = c_new + beta * delta
        C = c_new
        s = s_new
        iters[idx] = it
        done = np.max(np.abs(delta), axis=0) <= tol
        if done.any():
            out[:, idx[done]] = C[:, done]
            keep = ~done
            idx, C, Z, Y = idx[keep], C[:, keep], Z[:, keep], Y[:, keep]
            if B is not None:
                B = B[:, keep]
    out[:, idx] = C
    return np.ascontiguousarray(out.T), iters
