"""Reduced-rank matrix autoregression and its pseudo-structural rewriting.

The reduced form is Y_t = sum_j U1 (U3_j' Y_{t-j} U4_j) U2' + E_t with row
rank r1 and column rank r2.  The pseudo-structural form multiplies the
block-vectorized observation by a unit upper-triangular matrix `omega`
carrying the contemporaneous relations (via the normalized left-null blocks
delta_star, gamma_star) and collects the lags in matrices `pi_j` whose only
nonzero rows are the bottom r1*r2 block (U4_j ⊗ U3_j)'.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import as_matrix, spectral_radius, vecb_permutation
from .series import series_values

SCHEMA_VERSION = "v1"


class NonRotatableOrderingError(ValueError):
    """The bottom square block of a factor is singular under the current row
    ordering; carries a suggested permutation that makes it invertible."""

    def __init__(self, which: str, permutation: np.ndarray):
        self.which = which
        self.permutation = permutation
        super().__init__(
            f"bottom block of {which} is singular; reorder rows as {permutation.tolist()}"
        )


@dataclass(frozen=True)
class Dims:
    """Matrix dimensions (n1, n2), ranks (r1, r2) and lag order p."""

    n1: int
    n2: int
    r1: int
    r2: int
    p: int = 1

    def __post_init__(self):
        if not (1 <= self.r1 <= self.n1):
            raise ValueError(f"need 1 <= r1 <= n1, got r1={self.r1}, n1={self.n1}")
        if not (1 <= self.r2 <= self.n2):
            raise ValueError(f"need 1 <= r2 <= n2, got r2={self.r2}, n2={self.n2}")
        if self.p < 1:
            raise ValueError(f"lag order must be >= 1, got {self.p}")

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def block_sizes(self) -> tuple[int, int, int, int]:
        """Sizes of the four block-vectorization segments."""
        k1, k2 = self.n1 - self.r1, self.n2 - self.r2
        return k1 * k2, self.r1 * k2, k1 * self.r2, self.r1 * self.r2


def _check_sigma(sigma: np.ndarray, n: int, name: str) -> np.ndarray:
    sigma = as_matrix(sigma, name)
    if sigma.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {sigma.shape}")
    if np.max(np.abs(sigma - sigma.T)) > 1e-10 * (1.0 + np.max(np.abs(sigma))):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc
    return 0.5 * (sigma + sigma.T)


def _check_lag_factors(lag_factors, dims: Dims) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    if len(lag_factors) != dims.p:
        raise ValueError(f"expected {dims.p} lag factor pairs, got {len(lag_factors)}")
    out = []
    for j, (u3, u4) in enumerate(lag_factors):
        u3 = as_matrix(u3, f"u3[{j}]")
        u4 = as_matrix(u4, f"u4[{j}]")
        if u3.shape != (dims.n1, dims.r1):
            raise ValueError(f"u3[{j}] must be {dims.n1}x{dims.r1}, got {u3.shape}")
        if u4.shape != (dims.n2, dims.r2):
            raise ValueError(f"u4[{j}] must be {dims.n2}x{dims.r2}, got {u4.shape}")
        out.append((u3, u4))
    return tuple(out)


@dataclass(frozen=True)
class RRMarParams:
    """Reduced-form parameters {u1, u2, {u3_j, u4_j}, sigma1, sigma2}."""

    dims: Dims
    u1: np.ndarray
    u2: np.ndarray
    lag_factors: tuple[tuple[np.ndarray, np.ndarray], ...]
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        d = self.dims
        u1 = as_matrix(self.u1, "u1")
        u2 = as_matrix(self.u2, "u2")
        if u1.shape != (d.n1, d.r1):
            raise ValueError(f"u1 must be {d.n1}x{d.r1}, got {u1.shape}")
        if u2.shape != (d.n2, d.r2):
            raise ValueError(f"u2 must be {d.n2}x{d.r2}, got {u2.shape}")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "lag_factors", _check_lag_factors(self.lag_factors, d))
        object.__setattr__(self, "sigma1", _check_sigma(self.sigma1, d.n1, "sigma1"))
        object.__setattr__(self, "sigma2", _check_sigma(self.sigma2, d.n2, "sigma2"))


@dataclass(frozen=True)
class PseudoStructParams:
    """Structural parameters {delta_star, gamma_star, {u3_j, u4_j}, sigma1, sigma2}.

    delta_star is r1 x (n1-r1) and gamma_star is r2 x (n2-r2); the implied
    annihilators are delta = [I; delta_star] and gamma = [I; gamma_star].
    """

    dims: Dims
    delta_star: np.ndarray
    gamma_star: np.ndarray
    lag_factors: tuple[tuple[np.ndarray, np.ndarray], ...]
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        d = self.dims
        ds = np.asarray(self.delta_star, dtype=float).reshape(d.r1, d.n1 - d.r1)
        gs = np.asarray(self.gamma_star, dtype=float).reshape(d.r2, d.n2 - d.r2)
        if not (np.all(np.isfinite(ds)) and np.all(np.isfinite(gs))):
            raise ValueError("delta_star/gamma_star contain non-finite entries")
        object.__setattr__(self, "delta_star", ds)
        object.__setattr__(self, "gamma_star", gs)
        object.__setattr__(self, "lag_factors", _check_lag_factors(self.lag_factors, d))
        object.__setattr__(self, "sigma1", _check_sigma(self.sigma1, d.n1, "sigma1"))
        object.__setattr__(self, "sigma2", _check_sigma(self.sigma2, d.n2, "sigma2"))

    @property
    def delta(self) -> np.ndarray:
        """Full annihilator of the row dynamics, [I; delta_star]."""
        d = self.dims
        return np.vstack([np.eye(d.n1 - d.r1), self.delta_star])

    @property
    def gamma(self) -> np.ndarray:
        """Full annihilator of the column dynamics, [I; gamma_star]."""
        d = self.dims
        return np.vstack([np.eye(d.n2 - d.r2), self.gamma_star])

    def free_parameter_count(self) -> int:
        """Number of stored coefficient entries, covariances excluded."""
        return int(
            self.delta_star.size
            + self.gamma_star.size
            + sum(u3.size + u4.size for u3, u4 in self.lag_factors)
        )


@dataclass(frozen=True)
class StructuralMatrices:
    """Contemporaneous matrix `omega` and lag matrices `pi` of the
    pseudo-structural system omega @ vecb(Y_t) = sum_j pi[j] @ vec(Y_{t-j}) + noise."""

    omega: np.ndarray
    pi: tuple[np.ndarray, ...]


def build_omega(delta_star: np.ndarray, gamma_star: np.ndarray, dims: Dims) -> np.ndarray:
    """Contemporaneous-relations matrix in block-vectorized ordering.

    Row blocks are ordered so the matrix is unit upper triangular (joint
    equations, then the two partial-annihilation blocks, then the
    unrestricted equations): the determinant is one by construction.
    """
    d = dims
    ds = np.asarray(delta_star, dtype=float)
    gs = np.asarray(gamma_star, dtype=float)
    if ds.shape != (d.r1, d.n1 - d.r1):
        raise ValueError(f"delta_star must be {d.r1}x{d.n1 - d.r1}, got {ds.shape}")
    if gs.shape != (d.r2, d.n2 - d.r2):
        raise ValueError(f"gamma_star must be {d.r2}x{d.n2 - d.r2}, got {gs.shape}")
    k1, k2 = d.n1 - d.r1, d.n2 - d.r2
    a, b, c, _ = d.block_sizes
    n = d.n
    omega = np.eye(n)
    omega[:a, a:a + b] = np.kron(np.eye(k2), ds.T)
    omega[:a, a + b:a + b + c] = np.kron(gs.T, np.eye(k1))
    omega[:a, a + b + c:] = np.kron(gs.T, ds.T)
    omega[a:a + b, a + b + c:] = np.kron(gs.T, np.eye(d.r1))
    omega[a + b:a + b + c, a + b + c:] = np.kron(np.eye(d.r2), ds.T)
    return omega


def build_pi(lag_factors, dims: Dims) -> list[np.ndarray]:
    """Lag matrices: zero except the bottom r1*r2 rows, which hold
    (u4_j ⊗ u3_j)' in vec column ordering."""
    factors = _check_lag_factors(lag_factors, dims)
    n = dims.n
    bottom = dims.r1 * dims.r2
    out = []
    for u3, u4 in factors:
        pi = np.zeros((n, n))
        pi[n - bottom:, :] = np.kron(u4, u3).T
        out.append(pi)
    return out


def structural_matrices(params: PseudoStructParams) -> StructuralMatrices:
    return StructuralMatrices(
        omega=build_omega(params.delta_star, params.gamma_star, params.dims),
        pi=tuple(build_pi(params.lag_factors, params.dims)),
    )


def rotatable_row_ordering(u: np.ndarray) -> np.ndarray:
    """Row permutation placing a well-conditioned square block at the bottom.

    Chosen greedily by column-pivoted QR on u'; the r pivot rows go to the
    bottom (in pivot order), the remaining rows keep their relative order.
    """
    u = as_matrix(u, "factor")
    r = u.shape[1]
    _, _, piv = scipy.linalg.qr(u.T, pivoting=True)
    chosen = list(piv[:r])
    rest = [i for i in range(u.shape[0]) if i not in chosen]
    return np.asarray(rest + chosen[::-1], dtype=np.intp)


def _normalize_factor(u: np.ndarray, which: str) -> np.ndarray:
    """Star block of the normalized annihilator: u spans the same column
    space as [-star'; I] exactly when the bottom square block is invertible."""
    n, r = u.shape
    bottom = u[n - r:, :]
    svals = np.linalg.svd(bottom, compute_uv=False)
    if svals[-1] <= r * np.finfo(float).eps * max(svals[0], 1.0):
        raise NonRotatableOrderingError(which, rotatable_row_ordering(u))
    top = u[: n - r, :]
    return -np.linalg.solve(bottom.T, top.T)


def rrmar_to_pseudo(params: RRMarParams) -> PseudoStructParams:
    """Rotate reduced-form factors into the identity-top-block normalization.

    The rotations are absorbed into the lag factors so the implied
    autoregressive coefficient matrices are unchanged.  Raises
    NonRotatableOrderingError (with a suggested row permutation) when the
    bottom square block of u1 or u2 is singular.
    """
    d = params.dims
    delta_star = _normalize_factor(params.u1, "u1")
    gamma_star = _normalize_factor(params.u2, "u2")
    b1 = params.u1[d.n1 - d.r1:, :]
    b2 = params.u2[d.n2 - d.r2:, :]
    lag_factors = tuple((u3 @ b1.T, u4 @ b2.T) for u3, u4 in params.lag_factors)
    return PseudoStructParams(
        dims=d,
        delta_star=delta_star,
        gamma_star=gamma_star,
        lag_factors=lag_factors,
        sigma1=params.sigma1,
        sigma2=params.sigma2,
    )


def canonical_factors(params: PseudoStructParams) -> tuple[np.ndarray, np.ndarray]:
    """The normalized factors u1 = [-delta_star'; I], u2 = [-gamma_star'; I]."""
    d = params.dims
    u1 = np.vstack([-params.delta_star.T, np.eye(d.r1)])
    u2 = np.vstack([-params.gamma_star.T, np.eye(d.r2)])
    return u1, u2


def pseudo_to_reduced(params: PseudoStructParams) -> RRMarParams:
    """Inverse of :func:`rrmar_to_pseudo` on the normalized representative."""
    u1, u2 = canonical_factors(params)
    return RRMarParams(
        dims=params.dims,
        u1=u1,
        u2=u2,
        lag_factors=params.lag_factors,
        sigma1=params.sigma1,
        sigma2=params.sigma2,
    )


def coefficient_matrices(params) -> list[np.ndarray]:
    """A_j = (u2 ⊗ u1)(u4_j ⊗ u3_j)' acting on vec(Y_{t-j}), one per lag."""
    if isinstance(params, PseudoStructParams):
        u1, u2 = canonical_factors(params)
    else:
        u1, u2 = params.u1, params.u2
    return [np.kron(u2 @ u4.T, u1 @ u3.T) for u3, u4 in params.lag_factors]


def companion_matrix(params) -> np.ndarray:
    """Block-companion matrix of the reduced form; p=1 gives A_1 itself."""
    mats = coefficient_matrices(params)
    p = len(mats)
    n = mats[0].shape[0]
    if p == 1:
        return mats[0]
    comp = np.zeros((p * n, p * n))
    comp[:n, :] = np.hstack(mats)
    comp[n:, :-n] = np.eye((p - 1) * n)
    return comp


def structural_companion(params: PseudoStructParams) -> tuple[np.ndarray, np.ndarray]:
    """Structural companion pair (lhs, rhs) with lhs @ stack_t = rhs @ stack_{t-1} + noise.

    lhs is block-diagonal with omega @ P in the leading block (P the
    vec-to-vecb permutation) and identities below; rhs stacks the lag
    matrices over an identity subdiagonal.  solve(lhs, rhs) equals the
    reduced-form companion matrix.
    """
    d = params.dims
    mats = structural_matrices(params)
    perm = vecb_permutation(d.n1, d.n2, d.r1, d.r2).matrix()
    n, p = d.n, d.p
    lhs = np.eye(p * n)
    lhs[:n, :n] = mats.omega @ perm
    rhs = np.zeros((p * n, p * n))
    for j, pi in enumerate(mats.pi):
        rhs[:n, j * n:(j + 1) * n] = pi
    if p > 1:
        rhs[n:, :-n] = np.eye((p - 1) * n)
    return lhs, rhs


def is_stationary(params, tol: float = 0.0) -> bool:
    return spectral_radius(companion_matrix(params)) < 1.0 - tol


def structural_residuals(series, params: PseudoStructParams):
    """The three annihilated combinations per observation.

    Returns arrays of shapes (T, n1-r1, n2), (T, n1, n2-r2) and
    (T, n1-r1, n2-r2) holding delta' Y_t, Y_t gamma and delta' Y_t gamma.
    """
    y = series_values(series)
    d = params.dims
    if y.shape[1:] != (d.n1, d.n2):
        raise ValueError(f"series is {y.shape[1:]}, parameters expect {(d.n1, d.n2)}")
    delta = params.delta
    gamma = params.gamma
    row_resid = np.einsum("ik,tkj->tij", delta.T, y)
    col_resid = np.einsum("tik,kj->tij", y, gamma)
    joint_resid = np.einsum("tik,kj->tij", row_resid, gamma)
    return row_resid, col_resid, joint_resid


def _mat_to_list(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in m]


def _dims_to_dict(d: Dims) -> dict:
    return {"n1": d.n1, "n2": d.n2, "r1": d.r1, "r2": d.r2, "p": d.p}


def params_to_dict(params) -> dict:
    """JSON-ready representation of either parameter type (schema v1)."""
    base = {
        "schema": SCHEMA_VERSION,
        "dims": _dims_to_dict(params.dims),
        "u3": [_mat_to_list(u3) for u3, _ in params.lag_factors],
        "u4": [_mat_to_list(u4) for _, u4 in params.lag_factors],
        "sigma1": _mat_to_list(params.sigma1),
        "sigma2": _mat_to_list(params.sigma2),
    }
    if isinstance(params, PseudoStructParams):
        base["type"] = "pseudo_structural"
        base["delta_star"] = _mat_to_list(params.delta_star)
        base["gamma_star"] = _mat_to_list(params.gamma_star)
    elif isinstance(params, RRMarParams):
        base["type"] = "reduced_rank"
        base["u1"] = _mat_to_list(params.u1)
        base["u2"] = _mat_to_list(params.u2)
    else:
        raise TypeError(f"unsupported parameter type {type(params)!r}")
    return base


def params_from_dict(data: dict):
    if data.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema {data.get('schema')!r}")
    d = Dims(**data["dims"])
    lag_factors = tuple(
        (np.asarray(u3, dtype=float), np.asarray(u4, dtype=float))
        for u3, u4 in zip(data["u3"], data["u4"])
    )
    common = dict(
        dims=d,
        lag_factors=lag_factors,
        sigma1=np.asarray(data["sigma1"], dtype=float),
        sigma2=np.asarray(data["sigma2"], dtype=float),
    )
    if data["type"] == "pseudo_structural":
        return PseudoStructParams(
            delta_star=np.asarray(data["delta_star"], dtype=float).reshape(d.r1, d.n1 - d.r1),
            gamma_star=np.asarray(data["gamma_star"], dtype=float).reshape(d.r2, d.n2 - d.r2),
            **common,
        )
    if data["type"] == "reduced_rank":
        return RRMarParams(
            u1=np.asarray(data["u1"], dtype=float),
            u2=np.asarray(data["u2"], dtype=float),
            **common,
        )
    raise ValueError(f"unknown parameter type {data['type']!r}")
