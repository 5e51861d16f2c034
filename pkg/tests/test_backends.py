"""Cross-checks between the compiled kernels and the pure-numpy fallback."""

import numpy as np
import pytest

from conftest import make_pseudo_params, simulate_plain
from rrmar import _purecore, backend
from rrmar.likelihood import LikelihoodData, packing_layout
from rrmar.model import Dims

_fastcore = pytest.importorskip("rrmar._fastcore")


CASES = [
    Dims(2, 2, 1, 1),
    Dims(3, 4, 2, 2),
    Dims(3, 4, 1, 3, p=2),
    Dims(3, 6, 2, 5),
    Dims(2, 5, 2, 3, p=3),
    Dims(1, 1, 1, 1),
]


@pytest.mark.parametrize("dims", CASES, ids=str)
def test_value_matches_fallback(dims, rng):
    params = make_pseudo_params(rng, dims, identity_sigmas=False)
    y = simulate_plain(params, 40, rng)
    ctx = LikelihoodData(y, dims).context
    layout = packing_layout(dims)
    for _ in range(5):
        theta = 0.4 * rng.standard_normal(layout.total)
        fast = _fastcore.loglik_value(theta, ctx)
        pure = _purecore.loglik_value(theta, ctx)
        assert fast == pytest.approx(pure, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("dims", CASES, ids=str)
def test_gradient_matches_fallback(dims, rng):
    params = make_pseudo_params(rng, dims, identity_sigmas=False)
    y = simulate_plain(params, 40, rng)
    ctx = LikelihoodData(y, dims).context
    layout = packing_layout(dims)
    for _ in range(5):
        theta = 0.4 * rng.standard_normal(layout.total)
        v_fast, g_fast = _fastcore.loglik_value_grad(theta, ctx)
        v_pure, g_pure = _purecore.loglik_value_grad(theta, ctx)
        assert v_fast == pytest.approx(v_pure, rel=1e-12, abs=1e-9)
        scale = np.maximum(np.abs(g_pure), 1.0)
        assert np.max(np.abs(g_fast - g_pure) / scale) < 1e-10


def test_backend_name_is_declared():
    assert backend.BACKEND_NAME in ("c", "python")
