"""Deterministic linear-algebra kernels shared by the rest of the package.

Kronecker products, column-wise and block vectorization, null-space bases,
spectral radius, nearest-PSD projection and matrix-normal sampling.  All
functions are pure: they never mutate their inputs and take any random
generator as an explicit argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-D float array with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product a ⊗ b."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def vec(m: np.ndarray) -> np.ndarray:
    """Column-wise vectorization: stacks the columns of ``m`` top to bottom."""
    return as_matrix(m).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


@dataclass(frozen=True)
class PermutationSpec:
    """Bijection on {0, .., n-1} stored in gather form.

    ``indices[k]`` is the source position whose entry lands at target
    position ``k``, i.e. ``permuted = x[indices]``.
    """

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        n = idx.shape[0]
        if sorted(idx.tolist()) != list(range(n)):
            raise ValueError("indices do not form a bijection")
        object.__setattr__(self, "indices", idx)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.indices]

    def inverse(self) -> "PermutationSpec":
        inv = np.empty_like(self.indices)
        inv[self.indices] = np.arange(self.indices.shape[0])
        return PermutationSpec(inv)

    def matrix(self) -> np.ndarray:
        """Dense permutation matrix P with P @ x == self.apply(x)."""
        n = self.indices.shape[0]
        p = np.zeros((n, n))
        p[np.arange(n), self.indices] = 1.0
        return p


def _check_ranks(n1: int, n2: int, r1: int, r2: int) -> None:
    if not (0 <= r1 <= n1):
        raise ValueError(f"row rank {r1} out of range [0, {n1}]")
    if not (0 <= r2 <= n2):
        raise ValueError(f"column rank {r2} out of range [0, {n2}]")


def vecb_permutation(n1: int, n2: int, r1: int, r2: int) -> PermutationSpec:
    """Permutation mapping vec ordering to block-vectorized ordering.

    The block vectorization partitions an n1 x n2 matrix into four blocks by
    splitting rows at n1 - r1 and columns at n2 - r2, then stacks
    vec(top-left), vec(bottom-left), vec(top-right), vec(bottom-right).
    """
    _check_ranks(n1, n2, r1, r2)
    k1 = n1 - r1
    k2 = n2 - r2
    top = range(k1)
    bottom = range(k1, n1)
    left = range(k2)
    right = range(k2, n2)
    order = []
    for rows, cols in ((top, left), (bottom, left), (top, right), (bottom, right)):
        for j in cols:
            for i in rows:
                order.append(j * n1 + i)
    return PermutationSpec(np.asarray(order, dtype=np.intp))


def vecb(m: np.ndarray, r1: int, r2: int) -> np.ndarray:
    """Block vectorization of ``m`` for the (r1, r2) rank partition."""
    m = as_matrix(m)
    n1, n2 = m.shape
    _check_ranks(n1, n2, r1, r2)
    k1, k2 = n1 - r1, n2 - r2
    return np.concatenate(
        [
            vec(m[:k1, :k2]),
            vec(m[k1:, :k2]),
            vec(m[:k1, k2:]),
            vec(m[k1:, k2:]),
        ]
    )


def null_space_basis(m: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis B of the left null space of ``m`` (B.T @ m == 0).

    Singular values below ``tol`` count as zero; the default is the usual
    SVD rank threshold max(rows, cols) * eps * sigma_max.
    """
    m = as_matrix(m)
    u, s, _ = np.linalg.svd(m, full_matrices=True)
    if tol is None:
        tol = max(m.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return u[:, rank:]


def column_space_basis(m: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``m``."""
    m = as_matrix(m)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if tol is None:
        tol = max(m.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return u[:, :rank]


def kron_null_decomposition(
    u1: np.ndarray, u2: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthogonal split of the left null space of u2 ⊗ u1.

    Returns orthonormal bases for the three components
    (null(u2.T) ⊗ col(u1), col(u2) ⊗ null(u1.T), null(u2.T) ⊗ null(u1.T))
    of widths (n2-r2)*r1, r2*(n1-r1) and (n2-r2)*(n1-r1).  Together with
    col(u2) ⊗ col(u1) they span the whole n1*n2-dimensional space.
    """
    u1 = as_matrix(u1, "u1")
    u2 = as_matrix(u2, "u2")
    if np.linalg.matrix_rank(u1) < u1.shape[1]:
        raise ValueError("u1 is rank deficient")
    if np.linalg.matrix_rank(u2) < u2.shape[1]:
        raise ValueError("u2 is rank deficient")
    c1 = column_space_basis(u1)
    c2 = column_space_basis(u2)
    d1 = null_space_basis(u1)
    d2 = null_space_basis(u2)
    return np.kron(d2, c1), np.kron(c2, d1), np.kron(d2, d1)


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if m.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def nearest_psd(m: np.ndarray, jitter: float = 1e-12) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix to sym(m).

    Symmetrizes, clamps negative eigenvalues to zero and adds ``jitter``
    to the diagonal.  Already-PSD input comes back unchanged up to jitter.
    """
    m = as_matrix(m)
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    out = 0.5 * (out + out.T)
    out[np.diag_indices_from(out)] += jitter
    return out


def sample_matrix_normal(
    rng: np.random.Generator,
    mean: np.ndarray,
    sigma1: np.ndarray,
    sigma2: np.ndarray,
) -> np.ndarray:
    """Draw E with vec(E) ~ N(vec(mean), sigma2 ⊗ sigma1).

    Uses mean + L1 @ Z @ L2.T with Z i.i.d. standard normal and L1, L2 the
    lower Cholesky factors; deterministic for a fixed generator state.
    """
    mean = as_matrix(mean, "mean")
    try:
        l1 = np.linalg.cholesky(as_matrix(sigma1, "sigma1"))
        l2 = np.linalg.cholesky(as_matrix(sigma2, "sigma2"))
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance factors must be positive definite") from exc
    z = rng.standard_normal(mean.shape)
    return mean + l1 @ z @ l2.T
