"""Kernel backend selection.

The compiled extension is used when importable; set RRMAR_BACKEND=python to
force the pure-numpy fallback (or RRMAR_BACKEND=c to require the compiled
kernels).  Both backends implement identical semantics and are cross-checked
in the test suite.
"""

from __future__ import annotations

import os

from . import _purecore

_choice = os.environ.get("RRMAR_BACKEND", "auto").lower()

if _choice not in ("auto", "c", "python"):
    raise RuntimeError(f"RRMAR_BACKEND must be auto, c or python, got {_choice!r}")

_impl = None
if _choice in ("auto", "c"):
    try:
        from . import _fastcore as _impl
    except ImportError:
        if _choice == "c":
            raise RuntimeError("compiled kernels requested but rrmar._fastcore is missing")
        _impl = None
if _impl is None:
    _impl = _purecore

BACKEND_NAME: str = _impl.BACKEND_NAME

KernelContext = _purecore.KernelContext
theta_length = _purecore.theta_length
split_theta = _purecore.split_theta
join_theta = _purecore.join_theta


def loglik_value(theta, ctx) -> float:
    return _impl.loglik_value(theta, ctx)


def loglik_value_grad(theta, ctx):
    return _impl.loglik_value_grad(theta, ctx)


def loglik_per_obs(theta, ctx):
    # per-observation terms are diagnostic; the fallback path is fine
    return _purecore.loglik_per_obs(theta, ctx)
