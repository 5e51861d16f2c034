"""Benchmark: compiled likelihood kernels vs the pure-numpy fallback.

Times value and value+gradient evaluation at representative problem sizes,
then a full multi-start fit under each backend.  Run with

    OPENBLAS_NUM_THREADS=1 python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from rrmar import _purecore
from rrmar.estimate import FitConfig, fit
from rrmar.likelihood import LikelihoodData, packing_layout
from rrmar.model import Dims
from rrmar.simulate import DgpSpec, simulate_from_spec

try:
    from rrmar import _fastcore
except ImportError:
    _fastcore = None


def time_call(fn, min_time=0.4):
    fn()  # warm up
    n, elapsed = 0, 0.0
    t0 = time.perf_counter()
    while elapsed < min_time:
        fn()
        n += 1
        elapsed = time.perf_counter() - t0
    return elapsed / n


def main():
    cases = [
        ("3x4 ranks (2,2) p=1 T=250", Dims(3, 4, 2, 2), 250),
        ("3x6 ranks (2,5) p=1 T=250", Dims(3, 6, 2, 5), 250),
        ("3x4 ranks (1,1) p=2 T=100", Dims(3, 4, 1, 1, p=2), 100),
    ]
    backends = [("python", _purecore)]
    if _fastcore is not None:
        backends.append(("c", _fastcore))

    print(f"{'case':34} {'backend':8} {'value':>12} {'value+grad':>12} {'speedup':>8}")
    for label, dims, n_obs in cases:
        spec = DgpSpec(dims=dims, n_obs=n_obs, seed=1)
        _, series = simulate_from_spec(spec)
        ctx = LikelihoodData(series, dims).context
        theta = 0.3 * np.random.default_rng(2).standard_normal(packing_layout(dims).total)
        reference = None
        for name, mod in backends:
            tv = time_call(lambda: mod.loglik_value(theta, ctx))
            tg = time_call(lambda: mod.loglik_value_grad(theta, ctx))
            if name == "python":
                reference = tg
            speed = f"{reference / tg:7.1f}x" if name != "python" else "       -"
            print(f"{label:34} {name:8} {tv * 1e6:10.1f}us {tg * 1e6:10.1f}us {speed}")

    print("\nfull fit (3x4 ranks (2,2), T=250, 40 starts keep 5):")
    spec = DgpSpec(dims=Dims(3, 4, 2, 2), n_obs=250, seed=3)
    _, series = simulate_from_spec(spec)
    data = LikelihoodData(series, spec.dims)
    config = FitConfig(n_starts=40, keep=5, seed=0)
    import rrmar.backend as backend_mod

    for name, mod in backends:
        original = backend_mod._impl
        backend_mod._impl = mod
        try:
            t0 = time.perf_counter()
            result = fit(data, config=config)
            elapsed = time.perf_counter() - t0
        finally:
            backend_mod._impl = original
        print(f"  {name:8} {elapsed:8.2f}s  (loglik {result.loglik:.4f})")


if __name__ == "__main__":
    main()
