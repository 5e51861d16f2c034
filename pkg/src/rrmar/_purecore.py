"""Pure-numpy likelihood kernels (fallback backend).

Both backends share one flat-parameter convention:

    [ delta_star (row-major) | gamma_star (row-major)
      | per lag: u3 (row-major), u4 (row-major)
      | lower Cholesky of sigma1, row-major over the lower triangle,
        diagonal in log scale, the (0,0) entry pinned to 1 and skipped
      | lower Cholesky of sigma2, same layout, nothing skipped ]

The objective is the Gaussian conditional log likelihood of the
pseudo-structural system; the contemporaneous matrix has unit determinant
so only the covariance log-determinants appear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

BACKEND_NAME = "python"

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class KernelContext:
    """Precomputed data arrays for repeated likelihood evaluation.

    ystar holds the block-vectorized observations (rows t = p+1 .. T) and
    ylags[j] the plain vectorized lag-(j+1) observations, both C-contiguous
    with shape (T - p, n1 * n2).  ``perm`` is the vec-to-vecb reordering, so
    the structural residual is (omega P) vec(E_t) and its covariance is
    (omega P) (sigma2 ⊗ sigma1) (omega P)'.
    """

    n1: int
    n2: int
    r1: int
    r2: int
    p: int
    ystar: np.ndarray
    ylags: np.ndarray
    perm: np.ndarray

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def n_obs_effective(self) -> int:
        return self.ystar.shape[0]


def theta_length(n1: int, n2: int, r1: int, r2: int, p: int) -> int:
    n_coef = r1 * (n1 - r1) + r2 * (n2 - r2) + p * (n1 * r1 + n2 * r2)
    return n_coef + n1 * (n1 + 1) // 2 - 1 + n2 * (n2 + 1) // 2


def split_theta(theta: np.ndarray, n1: int, n2: int, r1: int, r2: int, p: int):
    """Parse a flat parameter vector into its matrix blocks.

    Returns (delta_star, gamma_star, u3 list, u4 list, l1, l2) with l1, l2
    the lower Cholesky factors of the covariances.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (theta_length(n1, n2, r1, r2, p),):
        raise ValueError(
            f"theta has length {theta.shape}, expected {theta_length(n1, n2, r1, r2, p)}"
        )
    pos = 0
    k1, k2 = n1 - r1, n2 - r2
    ds = theta[pos:pos + r1 * k1].reshape(r1, k1)
    pos += r1 * k1
    gs = theta[pos:pos + r2 * k2].reshape(r2, k2)
    pos += r2 * k2
    u3s, u4s = [], []
    for _ in range(p):
        u3s.append(theta[pos:pos + n1 * r1].reshape(n1, r1))
        pos += n1 * r1
        u4s.append(theta[pos:pos + n2 * r2].reshape(n2, r2))
        pos += n2 * r2
    l1 = np.zeros((n1, n1))
    l1[0, 0] = 1.0
    for i in range(n1):
        for j in range(i + 1):
            if i == 0 and j == 0:
                continue
            l1[i, j] = np.exp(theta[pos]) if i == j else theta[pos]
            pos += 1
    l2 = np.zeros((n2, n2))
    for i in range(n2):
        for j in range(i + 1):
            l2[i, j] = np.exp(theta[pos]) if i == j else theta[pos]
            pos += 1
    return ds, gs, u3s, u4s, l1, l2


def join_theta(ds, gs, u3s, u4s, l1, l2) -> np.ndarray:
    """Inverse of :func:`split_theta`; l1[0, 0] must equal 1."""
    if abs(l1[0, 0] - 1.0) > 0.0:
        raise ValueError("l1[0, 0] must be pinned to 1")
    parts = [np.ravel(ds), np.ravel(gs)]
    for u3, u4 in zip(u3s, u4s):
        parts.append(np.ravel(u3))
        parts.append(np.ravel(u4))
    cov1 = []
    for i in range(l1.shape[0]):
        for j in range(i + 1):
            if i == 0 and j == 0:
                continue
            cov1.append(np.log(l1[i, j]) if i == j else l1[i, j])
    cov2 = []
    for i in range(l2.shape[0]):
        for j in range(i + 1):
            cov2.append(np.log(l2[i, j]) if i == j else l2[i, j])
    parts.append(np.asarray(cov1))
    parts.append(np.asarray(cov2))
    return np.concatenate(parts)


def _build_omega(ds, gs, n1, n2, r1, r2):
    k1, k2 = n1 - r1, n2 - r2
    a, b, c = k1 * k2, r1 * k2, k1 * r2
    n = n1 * n2
    omega = np.eye(n)
    omega[:a, a:a + b] = np.kron(np.eye(k2), ds.T)
    omega[:a, a + b:a + b + c] = np.kron(gs.T, np.eye(k1))
    omega[:a, a + b + c:] = np.kron(gs.T, ds.T)
    omega[a:a + b, a + b + c:] = np.kron(gs.T, np.eye(r1))
    omega[a + b:a + b + c, a + b + c:] = np.kron(np.eye(r2), ds.T)
    return omega


def _residuals(ctx: KernelContext, omega, u3s, u4s):
    m = ctx.r1 * ctx.r2
    resid = ctx.ystar @ omega.T
    for j in range(ctx.p):
        resid[:, ctx.n - m:] -= ctx.ylags[j] @ np.kron(u4s[j], u3s[j])
    return resid


def loglik_value(theta: np.ndarray, ctx: KernelContext) -> float:
    # overflow at extreme trial points yields a non-finite value, which the
    # callers treat as an infeasible step; no warning needed
    with np.errstate(over="ignore", invalid="ignore"):
        ds, gs, u3s, u4s, l1, l2 = split_theta(theta, ctx.n1, ctx.n2, ctx.r1, ctx.r2, ctx.p)
        omega = _build_omega(ds, gs, ctx.n1, ctx.n2, ctx.r1, ctx.r2)
        resid = _residuals(ctx, omega, u3s, u4s)
        lk = omega @ np.kron(l2, l1)[ctx.perm, :]
        s = lk @ lk.T
        chol = np.linalg.cholesky(s)
        z = scipy.linalg.solve_triangular(chol, resid.T, lower=True)
        quad = float(np.sum(z * z))
        teff = ctx.n_obs_effective
        logdet1 = 2.0 * float(np.sum(np.log(np.diag(l1))))
        logdet2 = 2.0 * float(np.sum(np.log(np.diag(l2))))
        return (
            -0.5 * teff * ctx.n * _LOG_2PI
            - 0.5 * teff * ctx.n2 * logdet1
            - 0.5 * teff * ctx.n1 * logdet2
            - 0.5 * quad
        )


def loglik_per_obs(theta: np.ndarray, ctx: KernelContext) -> np.ndarray:
    """Per-observation quadratic forms r_t' S^{-1} r_t (no determinant terms)."""
    ds, gs, u3s, u4s, l1, l2 = split_theta(theta, ctx.n1, ctx.n2, ctx.r1, ctx.r2, ctx.p)
    omega = _build_omega(ds, gs, ctx.n1, ctx.n2, ctx.r1, ctx.r2)
    resid = _residuals(ctx, omega, u3s, u4s)
    lk = omega @ np.kron(l2, l1)[ctx.perm, :]
    chol = np.linalg.cholesky(lk @ lk.T)
    z = scipy.linalg.solve_triangular(chol, resid.T, lower=True)
    return np.sum(z * z, axis=0)


def loglik_value_grad(theta: np.ndarray, ctx: KernelContext) -> tuple[float, np.ndarray]:
    """Objective value and its exact gradient in the flat parameterization."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _value_grad_impl(theta, ctx)


def _value_grad_impl(theta: np.ndarray, ctx: KernelContext) -> tuple[float, np.ndarray]:
    n1, n2, r1, r2, p = ctx.n1, ctx.n2, ctx.r1, ctx.r2, ctx.p
    k1, k2 = n1 - r1, n2 - r2
    n, m = ctx.n, r1 * r2
    a, b, c = k1 * k2, r1 * k2, k1 * r2
    teff = ctx.n_obs_effective

    ds, gs, u3s, u4s, l1, l2 = split_theta(theta, n1, n2, r1, r2, p)
    omega = _build_omega(ds, gs, n1, n2, r1, r2)
    resid = _residuals(ctx, omega, u3s, u4s)
    sigma1 = l1 @ l1.T
    sigma2 = l2 @ l2.T
    # covariance of the block-vectorized noise: rows/cols of the Kronecker
    # covariance reordered by the vec-to-vecb permutation
    kstar = np.kron(sigma2, sigma1)[np.ix_(ctx.perm, ctx.perm)]
    s = omega @ kstar @ omega.T
    chol = np.linalg.cholesky(s)
    z = scipy.linalg.solve_triangular(chol, resid.T, lower=True)
    quad = float(np.sum(z * z))
    g = scipy.linalg.solve_triangular(chol, z, lower=True, trans="T")  # n x teff

    logdet1 = 2.0 * float(np.sum(np.log(np.diag(l1))))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(l2))))
    value = (
        -0.5 * teff * n * _LOG_2PI
        - 0.5 * teff * n2 * logdet1
        - 0.5 * teff * n1 * logdet2
        - 0.5 * quad
    )

    h = g @ g.T  # sum_t g_t g_t'
    d_omega = -(g @ ctx.ystar) + h @ omega @ kstar

    # chain the omega blocks back to delta_star / gamma_star
    g_ds = np.zeros((r1, k1))
    g_gs = np.zeros((r2, k2))
    if k1:
        blk = d_omega[:a, a:a + b].reshape(k2, k1, k2, r1)
        g_ds += np.einsum("sjsi->ij", blk)
        blk = d_omega[a + b:a + b + c, a + b + c:].reshape(r2, k1, r2, r1)
        g_ds += np.einsum("sjsi->ij", blk)
    if k1 and k2:
        blk = d_omega[:a, a + b + c:].reshape(k2, k1, r2, r1)
        g_ds += np.einsum("ujvi,vu->ij", blk, gs)
        g_gs += np.einsum("ujvi,ij->vu", blk, ds)
    if k2:
        blk = d_omega[:a, a + b:a + b + c].reshape(k2, k1, r2, k1)
        g_gs += np.einsum("uxvx->vu", blk)
        blk = d_omega[a:a + b, a + b + c:].reshape(k2, r1, r2, r1)
        g_gs += np.einsum("uxvx->vu", blk)

    # lag factors: bottom-block gradient chained through the Kronecker product
    g_u3s, g_u4s = [], []
    g_bot = g[n - m:, :]
    for j in range(p):
        d_b = (g_bot @ ctx.ylags[j]).reshape(r2, r1, n2, n1)
        g_u3s.append(np.einsum("likh,kl->hi", d_b, u4s[j]))
        g_u4s.append(np.einsum("likh,hi->kl", d_b, u3s[j]))

    # covariances: quadratic-form channel plus the log-determinant terms;
    # the vecb-ordered sensitivity scatters back to vec ordering first
    f_star = omega.T @ h @ omega
    f = np.empty_like(f_star)
    f[np.ix_(ctx.perm, ctx.perm)] = f_star
    f4 = f.reshape(n2, n1, n2, n1)
    g_s1 = 0.5 * np.einsum("ikjl,ij->kl", f4, sigma2)
    g_s2 = 0.5 * np.einsum("ikjl,kl->ij", f4, sigma1)
    g_s1 -= 0.5 * teff * n2 * np.linalg.inv(sigma1)
    g_s2 -= 0.5 * teff * n1 * np.linalg.inv(sigma2)
    d_l1 = 2.0 * (g_s1 @ l1)
    d_l2 = 2.0 * (g_s2 @ l2)

    grad = np.empty_like(np.asarray(theta, dtype=float))
    pos = 0
    grad[pos:pos + r1 * k1] = g_ds.ravel()
    pos += r1 * k1
    grad[pos:pos + r2 * k2] = g_gs.ravel()
    pos += r2 * k2
    for j in range(p):
        grad[pos:pos + n1 * r1] = g_u3s[j].ravel()
        pos += n1 * r1
        grad[pos:pos + n2 * r2] = g_u4s[j].ravel()
        pos += n2 * r2
    for i in range(n1):
        for jj in range(i + 1):
            if i == 0 and jj == 0:
                continue
            grad[pos] = d_l1[i, jj] * (l1[i, i] if i == jj else 1.0)
            pos += 1
    for i in range(n2):
        for jj in range(i + 1):
            grad[pos] = d_l2[i, jj] * (l2[i, i] if i == jj else 1.0)
            pos += 1
    return value, grad
