"""Full-information Gaussian log likelihood of the pseudo-structural model.

Handles the flat parameter vector (coefficients plus unconstrained
Cholesky coordinates of the covariances), exact gradients with a
finite-difference oracle, and the observed information matrix.
Evaluation is single-threaded and the per-observation quadratic forms
reduce in time order, so repeated calls give identical results.

The covariance pair is identified only up to a reciprocal scale, so the
(0, 0) entry of sigma1's Cholesky factor is pinned to 1; packing a
parameter set first moves it onto that convention (the likelihood is
invariant under the rescaling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .linalg import vecb_permutation
from .model import Dims, PseudoStructParams
from .series import series_values

_EPS_THIRD = float(np.finfo(float).eps ** (1.0 / 3.0))


@dataclass(frozen=True)
class PackingLayout:
    """Offsets of the parameter blocks inside the flat vector."""

    dims: Dims
    delta: slice
    gamma: slice
    lags: tuple[tuple[slice, slice], ...]
    chol1: slice
    chol2: slice
    total: int

    @property
    def n_coefficients(self) -> int:
        return self.chol1.start


def packing_layout(dims: Dims) -> PackingLayout:
    d = dims
    pos = 0

    def take(k):
        nonlocal pos
        s = slice(pos, pos + k)
        pos += k
        return s

    delta = take(d.r1 * (d.n1 - d.r1))
    gamma = take(d.r2 * (d.n2 - d.r2))
    lags = tuple((take(d.n1 * d.r1), take(d.n2 * d.r2)) for _ in range(d.p))
    chol1 = take(d.n1 * (d.n1 + 1) // 2 - 1)
    chol2 = take(d.n2 * (d.n2 + 1) // 2)
    assert pos == backend.theta_length(d.n1, d.n2, d.r1, d.r2, d.p)
    return PackingLayout(d, delta, gamma, lags, chol1, chol2, pos)


def normalize_covariance_scale(params: PseudoStructParams) -> PseudoStructParams:
    """Rescale (sigma1, sigma2) so sigma1[0, 0] == 1; the product
    sigma2 ⊗ sigma1 and hence the likelihood are unchanged."""
    c = params.sigma1[0, 0]
    if c <= 0:
        raise ValueError("sigma1[0, 0] must be positive")
    if c == 1.0:
        return params
    return PseudoStructParams(
        dims=params.dims,
        delta_star=params.delta_star,
        gamma_star=params.gamma_star,
        lag_factors=params.lag_factors,
        sigma1=params.sigma1 / c,
        sigma2=params.sigma2 * c,
    )


def pack_params(params: PseudoStructParams) -> np.ndarray:
    """Flatten parameters; applies the sigma1[0, 0] = 1 scale convention."""
    params = normalize_covariance_scale(params)
    l1 = np.linalg.cholesky(params.sigma1)
    l2 = np.linalg.cholesky(params.sigma2)
    u3s = [u3 for u3, _ in params.lag_factors]
    u4s = [u4 for _, u4 in params.lag_factors]
    return backend.join_theta(params.delta_star, params.gamma_star, u3s, u4s, l1, l2)


def unpack_params(theta: np.ndarray, dims: Dims) -> PseudoStructParams:
    ds, gs, u3s, u4s, l1, l2 = backend.split_theta(
        theta, dims.n1, dims.n2, dims.r1, dims.r2, dims.p
    )
    return PseudoStructParams(
        dims=dims,
        delta_star=ds,
        gamma_star=gs,
        lag_factors=tuple(zip(u3s, u4s)),
        sigma1=l1 @ l1.T,
        sigma2=l2 @ l2.T,
    )


class LikelihoodData:
    """Data arrays prepared once for repeated likelihood evaluation."""

    def __init__(self, series, dims: Dims):
        y = series_values(series)
        t, n1, n2 = y.shape
        if (n1, n2) != (dims.n1, dims.n2):
            raise ValueError(f"data is {n1}x{n2}, dims expect {dims.n1}x{dims.n2}")
        if t <= dims.p:
            raise ValueError(f"need more than p={dims.p} observations, got {t}")
        vecs = np.ascontiguousarray(y.transpose(0, 2, 1).reshape(t, n1 * n2))
        perm = vecb_permutation(n1, n2, dims.r1, dims.r2).indices
        teff = t - dims.p
        ystar = np.ascontiguousarray(vecs[dims.p:, perm])
        ylags = np.ascontiguousarray(
            np.stack([vecs[dims.p - 1 - j : dims.p - 1 - j + teff] for j in range(dims.p)])
        )
        self.dims = dims
        self.n_obs = t
        self.context = backend.KernelContext(
            n1=n1, n2=n2, r1=dims.r1, r2=dims.r2, p=dims.p, ystar=ystar, ylags=ylags,
            perm=np.ascontiguousarray(perm),
        )


def _as_data(data, dims: Dims | None) -> LikelihoodData:
    if isinstance(data, LikelihoodData):
        return data
    if dims is None:
        raise ValueError("dims are required when passing raw series data")
    return LikelihoodData(data, dims)


@dataclass(frozen=True)
class LogLikValue:
    value: float
    gradient: np.ndarray | None = None
    per_obs: np.ndarray | None = None


def loglik(
    theta: np.ndarray,
    data,
    dims: Dims | None = None,
    *,
    gradient: bool = False,
    per_obs: bool = False,
) -> LogLikValue:
    """Gaussian conditional log likelihood at a flat parameter vector.

    The first p observations are conditioned on; the contemporaneous
    matrix has unit determinant and drops out of the value.
    """
    prepared = _as_data(data, dims)
    ctx = prepared.context
    if gradient:
        value, grad = backend.loglik_value_grad(np.asarray(theta, dtype=float), ctx)
    else:
        value, grad = backend.loglik_value(np.asarray(theta, dtype=float), ctx), None
    terms = backend.loglik_per_obs(np.asarray(theta, dtype=float), ctx) if per_obs else None
    if not np.isfinite(value):
        raise FloatingPointError("log likelihood is not finite at this parameter value")
    return LogLikValue(value=float(value), gradient=grad, per_obs=terms)


def loglik_params(params: PseudoStructParams, data) -> float:
    """Evaluate the likelihood at a structured parameter set."""
    return loglik(pack_params(params), data, params.dims).value


def finite_diff_grad(theta: np.ndarray, data, dims: Dims | None = None) -> np.ndarray:
    """Central finite differences with per-coordinate step eps^(1/3) * (1 + |x|)."""
    prepared = _as_data(data, dims)
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = _EPS_THIRD * (1.0 + abs(theta[i]))
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        grad[i] = (
            backend.loglik_value(up, prepared.context)
            - backend.loglik_value(dn, prepared.context)
        ) / (2.0 * h)
    return grad


def grad_loglik(
    theta: np.ndarray, data, dims: Dims | None = None, *, method: str = "analytic"
) -> np.ndarray:
    """Gradient of the log likelihood (exact by default, "fd" for the
    central-difference oracle)."""
    if method == "analytic":
        prepared = _as_data(data, dims)
        _, grad = backend.loglik_value_grad(np.asarray(theta, dtype=float), prepared.context)
        return grad
    if method == "fd":
        return finite_diff_grad(theta, data, dims)
    raise ValueError(f"unknown gradient method {method!r}")


@dataclass(frozen=True)
class ObservedInformation:
    """Negative Hessian at an estimate, with saddle diagnostics.

    ``matrix`` is the PSD-projected information used for inference;
    ``raw`` keeps the unprojected symmetrized negative Hessian.
    """

    matrix: np.ndarray
    raw: np.ndarray
    min_eigenvalue: float
    is_saddle: bool


SADDLE_RELATIVE_TOL = 1e-6


def observed_information(theta: np.ndarray, data, dims: Dims | None = None) -> ObservedInformation:
    """Observed information: finite differences of the exact gradient,
    symmetrized, then projected to PSD unless a genuine saddle is detected."""
    from .linalg import nearest_psd

    prepared = _as_data(data, dims)
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    hess = np.empty((k, k))
    for i in range(k):
        h = _EPS_THIRD * (1.0 + abs(theta[i]))
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        _, g_up = backend.loglik_value_grad(up, prepared.context)
        _, g_dn = backend.loglik_value_grad(dn, prepared.context)
        hess[:, i] = (g_up - g_dn) / (2.0 * h)
    if not np.all(np.isfinite(hess)):
        raise FloatingPointError("Hessian contains non-finite entries")
    info = -0.5 * (hess + hess.T)
    eigs = np.linalg.eigvalsh(info)
    min_eig = float(eigs[0])
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    is_saddle = min_eig < -SADDLE_RELATIVE_TOL * scale
    matrix = info if is_saddle else nearest_psd(info)
    return ObservedInformation(
        matrix=matrix, raw=info, min_eigenvalue=min_eig, is_saddle=is_saddle
    )
