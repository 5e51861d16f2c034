# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernels.

Same flat-parameter convention and semantics as the pure-numpy fallback
(see _purecore): value and exact-gradient evaluation of the Gaussian
conditional log likelihood, written against BLAS/LAPACK for the
time-dimension products and the covariance factorization.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemm, dtrsm
from scipy.linalg.cython_lapack cimport dpotrf

cnp.import_array()

BACKEND_NAME = "c"

cdef double LOG_2PI = 1.8378770664093453


cdef inline void mm(bint ta, bint tb, int m, int n, int k, double alpha,
                    double* a, int a_stride, double* b, int b_stride,
                    double beta, double* c, int c_stride) noexcept nogil:
    # C-order matmul: c (m x n) = alpha * op(a) @ op(b) + beta * c, with
    # explicit row strides; mapped onto column-major BLAS through
    # C' = op(b)' op(a)'
    cdef char ca = b'T' if ta else b'N'
    cdef char cb = b'T' if tb else b'N'
    dgemm(&cb, &ca, &n, &m, &k, &alpha, b, &b_stride, a, &a_stride, &beta, c, &c_stride)


cdef void parse_theta(double[::1] theta, int n1, int n2, int r1, int r2, int p,
                      double[:, ::1] ds, double[:, ::1] gs,
                      double[:, :, ::1] u3, double[:, :, ::1] u4,
                      double[:, ::1] l1, double[:, ::1] l2) noexcept nogil:
    cdef int pos = 0, i, j, lag
    cdef int k1 = n1 - r1, k2 = n2 - r2
    for i in range(r1):
        for j in range(k1):
            ds[i, j] = theta[pos]; pos += 1
    for i in range(r2):
        for j in range(k2):
            gs[i, j] = theta[pos]; pos += 1
    for lag in range(p):
        for i in range(n1):
            for j in range(r1):
                u3[lag, i, j] = theta[pos]; pos += 1
        for i in range(n2):
            for j in range(r2):
                u4[lag, i, j] = theta[pos]; pos += 1
    l1[:, :] = 0.0
    l1[0, 0] = 1.0
    for i in range(n1):
        for j in range(i + 1):
            if i == 0 and j == 0:
                continue
            l1[i, j] = exp(theta[pos]) if i == j else theta[pos]
            pos += 1
    l2[:, :] = 0.0
    for i in range(n2):
        for j in range(i + 1):
            l2[i, j] = exp(theta[pos]) if i == j else theta[pos]
            pos += 1


cdef void build_omega(double[:, ::1] ds, double[:, ::1] gs,
                      int n1, int n2, int r1, int r2,
                      double[:, ::1] omega) noexcept nogil:
    cdef int k1 = n1 - r1, k2 = n2 - r2
    cdef int a = k1 * k2, b = r1 * k2, c = k1 * r2
    cdef int n = n1 * n2, i, j, s, u, v, x
    omega[:, :] = 0.0
    for i in range(n):
        omega[i, i] = 1.0
    for s in range(k2):
        for j in range(k1):
            for i in range(r1):
                omega[s * k1 + j, a + s * r1 + i] = ds[i, j]
    for u in range(k2):
        for v in range(r2):
            for x in range(k1):
                omega[u * k1 + x, a + b + v * k1 + x] = gs[v, u]
    for u in range(k2):
        for v in range(r2):
            for j in range(k1):
                for i in range(r1):
                    omega[u * k1 + j, a + b + c + v * r1 + i] = gs[v, u] * ds[i, j]
    for u in range(k2):
        for v in range(r2):
            for x in range(r1):
                omega[a + u * r1 + x, a + b + c + v * r1 + x] = gs[v, u]
    for s in range(r2):
        for j in range(k1):
            for i in range(r1):
                omega[a + b + s * k1 + j, a + b + c + s * r1 + i] = ds[i, j]


cdef int cholesky_lower(double[:, ::1] s, int n) noexcept nogil:
    # in-place lower Cholesky of a C-order symmetric matrix: the
    # column-major reading is the same symmetric matrix and its upper
    # factor occupies exactly the C-order lower triangle
    cdef char uplo = b'U'
    cdef int info = 0
    dpotrf(&uplo, &n, &s[0, 0], &n, &info)
    return info


cdef void solve_from_right(double[:, ::1] chol, double[:, ::1] rhs,
                           int n, int rows, bint lower_transpose) noexcept nogil:
    # rhs (rows x n, C-order) <- rhs @ inv(L') when lower_transpose else
    # rhs @ inv(L), with L the C-order lower factor stored in `chol`; the
    # column-major reading of that buffer is the upper factor L'
    cdef char side = b'L', uplo = b'U', diag = b'N'
    cdef char trans = b'T' if lower_transpose else b'N'
    cdef double one = 1.0
    dtrsm(&side, &uplo, &trans, &diag, &n, &rows, &one, &chol[0, 0], &n, &rhs[0, 0], &n)


cdef class _Work:
    cdef double[:, ::1] ds, gs, l1, l2, s1, s2, omega, kstar, tmp, smat, kron_u
    cdef double[:, :, ::1] u3, u4

    def __init__(self, int n1, int n2, int r1, int r2, int p):
        cdef int n = n1 * n2, m = r1 * r2
        self.ds = np.empty((r1, n1 - r1))
        self.gs = np.empty((r2, n2 - r2))
        self.u3 = np.empty((p, n1, r1))
        self.u4 = np.empty((p, n2, r2))
        self.l1 = np.empty((n1, n1))
        self.l2 = np.empty((n2, n2))
        self.s1 = np.empty((n1, n1))
        self.s2 = np.empty((n2, n2))
        self.omega = np.empty((n, n))
        self.kstar = np.empty((n, n))
        self.tmp = np.empty((n, n))
        self.smat = np.empty((n, n))
        self.kron_u = np.empty((n, m))


cdef double _prepare(double[::1] theta, int n1, int n2, int r1, int r2, int p,
                     double[:, ::1] ystar, double[:, :, ::1] ylags,
                     cnp.intp_t[::1] perm, _Work w, double[:, ::1] resid) except? 1e308:
    """Shared value path: parse, build matrices, factorize, solve; returns the
    log-likelihood value.  On exit `resid` holds Z' with Z = inv(L_S) R'."""
    cdef int n = n1 * n2, m = r1 * r2, teff = ystar.shape[0]
    cdef int i, j, lag, k1i, k2i, l1i, l2i
    cdef Py_ssize_t pi, pj

    parse_theta(theta, n1, n2, r1, r2, p, w.ds, w.gs, w.u3, w.u4, w.l1, w.l2)
    build_omega(w.ds, w.gs, n1, n2, r1, r2, w.omega)
    mm(False, True, n1, n1, n1, 1.0, &w.l1[0, 0], n1, &w.l1[0, 0], n1, 0.0, &w.s1[0, 0], n1)
    mm(False, True, n2, n2, n2, 1.0, &w.l2[0, 0], n2, &w.l2[0, 0], n2, 0.0, &w.s2[0, 0], n2)
    for i in range(n):
        pi = perm[i]
        for j in range(n):
            pj = perm[j]
            w.kstar[i, j] = w.s2[pi // n1, pj // n1] * w.s1[pi % n1, pj % n1]
    mm(False, False, n, n, n, 1.0, &w.omega[0, 0], n, &w.kstar[0, 0], n, 0.0, &w.tmp[0, 0], n)
    mm(False, True, n, n, n, 1.0, &w.tmp[0, 0], n, &w.omega[0, 0], n, 0.0, &w.smat[0, 0], n)
    if cholesky_lower(w.smat, n) != 0:
        raise np.linalg.LinAlgError("residual covariance is not positive definite")

    mm(False, True, teff, n, n, 1.0, &ystar[0, 0], n, &w.omega[0, 0], n, 0.0, &resid[0, 0], n)
    for lag in range(p):
        for k2i in range(n2):
            for k1i in range(n1):
                for l2i in range(r2):
                    for l1i in range(r1):
                        w.kron_u[k2i * n1 + k1i, l2i * r1 + l1i] = (
                            w.u4[lag, k2i, l2i] * w.u3[lag, k1i, l1i]
                        )
        mm(False, False, teff, m, n, -1.0, &ylags[lag, 0, 0], n,
           &w.kron_u[0, 0], m, 1.0, &resid[0, n - m], n)

    cdef double quad = 0.0, logdet1 = 0.0, logdet2 = 0.0
    solve_from_right(w.smat, resid, n, teff, True)  # resid <- Z' = R inv(L')
    for i in range(teff):
        for j in range(n):
            quad += resid[i, j] * resid[i, j]
    for i in range(n1):
        logdet1 += 2.0 * log(w.l1[i, i])
    for i in range(n2):
        logdet2 += 2.0 * log(w.l2[i, i])
    return (-0.5 * teff * n * LOG_2PI - 0.5 * teff * n2 * logdet1
            - 0.5 * teff * n1 * logdet2 - 0.5 * quad)


def loglik_value(theta_in, ctx):
    cdef double[::1] theta = np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef int n1 = ctx.n1, n2 = ctx.n2, r1 = ctx.r1, r2 = ctx.r2, p = ctx.p
    cdef double[:, ::1] ystar = ctx.ystar
    cdef double[:, :, ::1] ylags = ctx.ylags
    cdef cnp.intp_t[::1] perm = ctx.perm
    cdef _Work w = _Work(n1, n2, r1, r2, p)
    cdef double[:, ::1] resid = np.empty((ystar.shape[0], n1 * n2))
    return _prepare(theta, n1, n2, r1, r2, p, ystar, ylags, perm, w, resid)


def loglik_value_grad(theta_in, ctx):
    cdef double[::1] theta = np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef int n1 = ctx.n1, n2 = ctx.n2, r1 = ctx.r1, r2 = ctx.r2, p = ctx.p
    cdef double[:, ::1] ystar = ctx.ystar
    cdef double[:, :, ::1] ylags = ctx.ylags
    cdef cnp.intp_t[::1] perm = ctx.perm
    cdef int n = n1 * n2, m = r1 * r2, teff = ystar.shape[0]
    cdef int k1 = n1 - r1, k2 = n2 - r2
    cdef int a = k1 * k2, b = r1 * k2, c = k1 * r2
    cdef int i, j, lag, s, u, v, x, k1i, k2i, l1i, l2i, pos
    cdef Py_ssize_t pi, pj
    cdef double acc

    cdef _Work w = _Work(n1, n2, r1, r2, p)
    cdef double[:, ::1] gt = np.empty((teff, n))
    cdef double value = _prepare(theta, n1, n2, r1, r2, p, ystar, ylags, perm, w, gt)
    # gt holds Z'; finish the solve so gt = G' with G = inv(S) R'
    solve_from_right(w.smat, gt, n, teff, False)

    cdef double[:, ::1] h = np.empty((n, n))
    mm(True, False, n, n, teff, 1.0, &gt[0, 0], n, &gt[0, 0], n, 0.0, &h[0, 0], n)

    # d_omega = -G @ ystar + H @ omega @ kstar
    cdef double[:, ::1] d_omega = np.empty((n, n))
    mm(True, False, n, n, teff, -1.0, &gt[0, 0], n, &ystar[0, 0], n, 0.0, &d_omega[0, 0], n)
    mm(False, False, n, n, n, 1.0, &h[0, 0], n, &w.omega[0, 0], n, 0.0, &w.tmp[0, 0], n)
    mm(False, False, n, n, n, 1.0, &w.tmp[0, 0], n, &w.kstar[0, 0], n, 1.0, &d_omega[0, 0], n)

    # chain to delta_star / gamma_star
    cdef double[:, ::1] g_ds = np.zeros((r1, k1))
    cdef double[:, ::1] g_gs = np.zeros((r2, k2))
    for i in range(r1):
        for j in range(k1):
            acc = 0.0
            for s in range(k2):
                acc += d_omega[s * k1 + j, a + s * r1 + i]
            for s in range(r2):
                acc += d_omega[a + b + s * k1 + j, a + b + c + s * r1 + i]
            for u in range(k2):
                for v in range(r2):
                    acc += w.gs[v, u] * d_omega[u * k1 + j, a + b + c + v * r1 + i]
            g_ds[i, j] = acc
    for v in range(r2):
        for u in range(k2):
            acc = 0.0
            for x in range(k1):
                acc += d_omega[u * k1 + x, a + b + v * k1 + x]
            for x in range(r1):
                acc += d_omega[a + u * r1 + x, a + b + c + v * r1 + x]
            for i in range(r1):
                for j in range(k1):
                    acc += w.ds[i, j] * d_omega[u * k1 + j, a + b + c + v * r1 + i]
            g_gs[v, u] = acc

    # lag factors through the Kronecker bottom block
    cdef double[:, ::1] g_bot = np.empty((m, teff))
    for i in range(m):
        for j in range(teff):
            g_bot[i, j] = gt[j, n - m + i]
    cdef double[:, ::1] d_b = np.empty((m, n))
    cdef double[:, :, ::1] g_u3 = np.zeros((p, n1, r1))
    cdef double[:, :, ::1] g_u4 = np.zeros((p, n2, r2))
    for lag in range(p):
        mm(False, False, m, n, teff, 1.0, &g_bot[0, 0], teff,
           &ylags[lag, 0, 0], n, 0.0, &d_b[0, 0], n)
        for k1i in range(n1):
            for l1i in range(r1):
                acc = 0.0
                for k2i in range(n2):
                    for l2i in range(r2):
                        acc += d_b[l2i * r1 + l1i, k2i * n1 + k1i] * w.u4[lag, k2i, l2i]
                g_u3[lag, k1i, l1i] = acc
        for k2i in range(n2):
            for l2i in range(r2):
                acc = 0.0
                for k1i in range(n1):
                    for l1i in range(r1):
                        acc += d_b[l2i * r1 + l1i, k2i * n1 + k1i] * w.u3[lag, k1i, l1i]
                g_u4[lag, k2i, l2i] = acc

    # covariances: scatter the vecb-ordered sensitivity back to vec ordering
    cdef double[:, ::1] f_star = np.empty((n, n))
    mm(True, False, n, n, n, 1.0, &w.omega[0, 0], n, &h[0, 0], n, 0.0, &w.tmp[0, 0], n)
    mm(False, False, n, n, n, 1.0, &w.tmp[0, 0], n, &w.omega[0, 0], n, 0.0, &f_star[0, 0], n)
    cdef double[:, ::1] g_s1 = np.zeros((n1, n1))
    cdef double[:, ::1] g_s2 = np.zeros((n2, n2))
    for i in range(n):
        pi = perm[i]
        for j in range(n):
            pj = perm[j]
            g_s1[pi % n1, pj % n1] += 0.5 * f_star[i, j] * w.s2[pi // n1, pj // n1]
            g_s2[pi // n1, pj // n1] += 0.5 * f_star[i, j] * w.s1[pi % n1, pj % n1]

    # log-determinant channel needs the sigma inverses; reuse the Cholesky
    # factors by solving small triangular systems against the identity
    inv1 = np.linalg.inv(np.asarray(w.s1))
    inv2 = np.linalg.inv(np.asarray(w.s2))
    cdef double[:, ::1] i1 = inv1
    cdef double[:, ::1] i2 = inv2
    for i in range(n1):
        for j in range(n1):
            g_s1[i, j] -= 0.5 * teff * n2 * i1[i, j]
    for i in range(n2):
        for j in range(n2):
            g_s2[i, j] -= 0.5 * teff * n1 * i2[i, j]

    cdef double[:, ::1] d_l1 = np.empty((n1, n1))
    cdef double[:, ::1] d_l2 = np.empty((n2, n2))
    mm(False, False, n1, n1, n1, 2.0, &g_s1[0, 0], n1, &w.l1[0, 0], n1, 0.0, &d_l1[0, 0], n1)
    mm(False, False, n2, n2, n2, 2.0, &g_s2[0, 0], n2, &w.l2[0, 0], n2, 0.0, &d_l2[0, 0], n2)

    grad_np = np.empty(theta.shape[0])
    cdef double[::1] grad = grad_np
    pos = 0
    for i in range(r1):
        for j in range(k1):
            grad[pos] = g_ds[i, j]; pos += 1
    for v in range(r2):
        for u in range(k2):
            grad[pos] = g_gs[v, u]; pos += 1
    for lag in range(p):
        for i in range(n1):
            for j in range(r1):
                grad[pos] = g_u3[lag, i, j]; pos += 1
        for i in range(n2):
            for j in range(r2):
                grad[pos] = g_u4[lag, i, j]; pos += 1
    for i in range(n1):
        for j in range(i + 1):
            if i == 0 and j == 0:
                continue
            grad[pos] = d_l1[i, j] * (w.l1[i, i] if i == j else 1.0)
            pos += 1
    for i in range(n2):
        for j in range(i + 1):
            grad[pos] = d_l2[i, j] * (w.l2[i, i] if i == j else 1.0)
            pos += 1
    return value, grad_np
