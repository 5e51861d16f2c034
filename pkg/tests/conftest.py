import numpy as np
import pytest

from rrmar.linalg import spectral_radius
from rrmar.model import Dims, PseudoStructParams, companion_matrix


def make_pseudo_params(rng, dims: Dims, rho: float = 0.5, identity_sigmas: bool = True):
    """Random pseudo-structural parameters rescaled to companion radius rho."""
    delta_star = rng.standard_normal((dims.r1, dims.n1 - dims.r1))
    gamma_star = rng.standard_normal((dims.r2, dims.n2 - dims.r2))
    lag_factors = tuple(
        (rng.standard_normal((dims.n1, dims.r1)), rng.standard_normal((dims.n2, dims.r2)))
        for _ in range(dims.p)
    )
    if identity_sigmas:
        sigma1, sigma2 = np.eye(dims.n1), np.eye(dims.n2)
    else:
        a = rng.standard_normal((dims.n1, dims.n1))
        b = rng.standard_normal((dims.n2, dims.n2))
        sigma1 = a @ a.T / dims.n1 + 0.5 * np.eye(dims.n1)
        sigma2 = b @ b.T / dims.n2 + 0.5 * np.eye(dims.n2)
    params = PseudoStructParams(
        dims=dims,
        delta_star=delta_star,
        gamma_star=gamma_star,
        lag_factors=lag_factors,
        sigma1=sigma1,
        sigma2=sigma2,
    )
    radius = spectral_radius(companion_matrix(params))
    if radius > 0:
        # bisect a common scale on the u3 factors to hit the target radius
        lo, hi = 0.0, 2.0 / radius
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            scaled = _scale_u3(params, mid)
            if spectral_radius(companion_matrix(scaled)) < rho:
                lo = mid
            else:
                hi = mid
        params = _scale_u3(params, lo)
    return params


def _scale_u3(params: PseudoStructParams, c: float) -> PseudoStructParams:
    return PseudoStructParams(
        dims=params.dims,
        delta_star=params.delta_star,
        gamma_star=params.gamma_star,
        lag_factors=tuple((c * u3, u4) for u3, u4 in params.lag_factors),
        sigma1=params.sigma1,
        sigma2=params.sigma2,
    )


def simulate_plain(params: PseudoStructParams, n_obs: int, rng, burn_in: int = 50):
    """Direct reduced-form recursion used as an independent data oracle."""
    from rrmar.model import canonical_factors

    d = params.dims
    u1, u2 = canonical_factors(params)
    l1 = np.linalg.cholesky(params.sigma1)
    l2 = np.linalg.cholesky(params.sigma2)
    history = [np.zeros((d.n1, d.n2)) for _ in range(d.p)]
    out = []
    for t in range(burn_in + n_obs):
        mean = np.zeros((d.n1, d.n2))
        for j, (u3, u4) in enumerate(params.lag_factors):
            mean += u1 @ (u3.T @ history[-1 - j] @ u4) @ u2.T
        e = l1 @ rng.standard_normal((d.n1, d.n2)) @ l2.T
        y = mean + e
        history.append(y)
        out.append(y)
    return np.asarray(out[burn_in:])


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
