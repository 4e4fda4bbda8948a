# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled FISTA loop over fixed blocks of pixels.

Pixels are grouped into blocks of ``BLOCK`` consecutive columns.  The two
dictionary products of a block go through BLAS ``dgemm``; shrinkage,
momentum and the per-pixel stopping test are fused into one C loop.  Block
boundaries depend only on the pixel index, so the result does not depend on
how many threads share the work.
"""

from cython.parallel cimport parallel, prange
from libc.math cimport fabs, sqrt
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm

import numpy as np

cdef enum:
    BLOCK = 128


cdef void _solve_block(
    double* Df,          # D row-major == D^T column-major (N x T)
    double* A,           # N x N symmetric, or NULL
    int T,
    int N,
    double* Y,           # K rows of T
    int K,
    double inv_l,
    double thr,
    int max_iter,
    double tol,
    double* C,           # K x N, output
    double* Z,           # K x N scratch
    double* G,           # K x N scratch
    double* Bv,          # K x N scratch (gram mode)
    double* R,           # K x T scratch
    int* live,
    int* iters,
) noexcept nogil:
    cdef int p, n, it = 0, n_live = K
    cdef double s = 1.0, s_new, beta, step, cn, d, hi, lo, ad
    cdef double one = 1.0, neg_one = -1.0, zero = 0.0, neg_inv_l = -inv_l
    cdef double* zp
    cdef double* cp
    cdef double* gp
    cdef char tr = b'T'
    cdef char nt = b'N'
    memset(C, 0, K * N * sizeof(double))
    memset(Z, 0, K * N * sizeof(double))
    for p in range(K):
        live[p] = 1
        iters[p] = 0
    if A != NULL:
        # Bv = D^T y / L
        dgemm(&nt, &nt, &N, &K, &T, &inv_l, Df, &N, Y, &T, &zero, Bv, &N)
    while it < max_iter and n_live > 0:
        if A != NULL:
            memcpy(G, Bv, K * N * sizeof(double))
            dgemm(&nt, &nt, &N, &K, &N, &one, A, &N, Z, &N, &one, G, &N)
        else:
            # R = D Z - Y, then G = Z - D^T R / L
            memcpy(R, Y, K * T * sizeof(double))
            dgemm(&tr, &nt, &T, &K, &N, &one, Df, &N, Z, &N, &neg_one, R, &T)
            memcpy(G, Z, K * N * sizeof(double))
            dgemm(&nt, &nt, &N, &K, &T, &neg_inv_l, Df, &N, R, &T, &one, G, &N)
        s_new = (1.0 + sqrt(1.0 + 4.0 * s * s)) / 2.0
        beta = (s - 1.0) / s_new
        it = it + 1
        for p in range(K):
            if not live[p]:
                continue
            zp = Z + p * N
            cp = C + p * N
            gp = G + p * N
            step = 0.0
            for n in range(N):
                # branch-free soft threshold: max(g - thr, 0) + min(g + thr, 0)
                hi = gp[n] - thr
                lo = gp[n] + thr
                hi = hi if hi > 0.0 else 0.0
                lo = lo if lo < 0.0 else 0.0
                cn = hi + lo
                d = cn - cp[n]
                ad = fabs(d)
                step = ad if ad > step else step
                zp[n] = cn + beta * d
                cp[n] = cn
            iters[p] = it
            if step <= tol:
                live[p] = 0
                n_live = n_live - 1
        s = s_new


def fista_kernel(
    const double[:, ::1] D,
    const double[:, ::1] Dt,
    A,
    const double[:, ::1] Yt,
    double lam,
    double lipschitz,
    int max_iter,
    double tol,
    int num_threads,
):
    """Solve every row of ``Yt`` (pixels x T); returns codes (pixels x N) and iteration counts."""
    cdef int T = D.shape[0]
    cdef int N = D.shape[1]
    cdef Py_ssize_t P = Yt.shape[0]
    cdef double[:, ::1] Dc = np.array(D, dtype=np.float64, order="C")
    cdef double[:, ::1] Am
    cdef double* a_ptr = NULL
    if A is not None:
        Am = np.array(A, dtype=np.float64, order="C")
        a_ptr = &Am[0, 0]
    out_arr = np.zeros((P, N), dtype=np.float64)
    it_arr = np.zeros(P, dtype=np.intc)
    if P == 0:
        return out_arr, it_arr
    cdef double[:, ::1] Yc = np.array(Yt, dtype=np.float64, order="C")
    cdef double[:, ::1] out = out_arr
    cdef int[::1] iters = it_arr
    cdef double inv_l = 1.0 / lipschitz
    cdef double thr = lam / lipschitz
    cdef Py_ssize_t nblocks = (P + BLOCK - 1) // BLOCK
    cdef Py_ssize_t blk, start
    cdef int K
    cdef double* buf
    cdef int* live
    if num_threads < 1:
        num_threads = 1
    with nogil, parallel(num_threads=num_threads):
        buf = <double*> malloc((3 * BLOCK * N + BLOCK * T) * sizeof(double))
        live = <int*> malloc(BLOCK * sizeof(int))
        for blk in prange(nblocks, schedule="static"):
            start = blk * BLOCK
            K = BLOCK
            if start + K > P:
                K = <int> (P - start)
            _solve_block(&Dc[0, 0], a_ptr, T, N, &Yc[start, 0], K, inv_l, thr,
                         max_iter, tol, &out[start, 0],
                         buf, buf + BLOCK * N, buf + 2 * BLOCK * N, buf + 3 * BLOCK * N,
                         live, &iters[start])
        free(buf)
        free(live)
    return out_arr, it_arr
