"""Rank and lag selection over a candidate grid by information criteria.

Every (r1, r2, p) candidate is fitted independently at a reduced start
budget with a seed derived from the cell coordinates, then tabulated with
the parameter-count penalty; failed cells stay visible in the grid but are
disqualified from the argmin.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .estimate import EstimationError, FitConfig, fit
from .likelihood import LikelihoodData
from .model import Dims
from .series import series_values

CELL_BUDGET = FitConfig(n_starts=40, keep=5)


class SelectionError(RuntimeError):
    pass


def phi(r1: int, r2: int, n1: int, n2: int, p: int = 1) -> int:
    """Parameter count of the rank-(r1, r2), lag-p model:
    r1*n1*(1+p) - r1^2 + r2*n2*(1+p) - r2^2."""
    if not (1 <= r1 <= n1 and 1 <= r2 <= n2):
        raise ValueError(f"ranks ({r1}, {r2}) out of range for ({n1}, {n2})")
    return r1 * n1 * (1 + p) - r1 * r1 + r2 * n2 * (1 + p) - r2 * r2


def information_criterion(
    loglik: float, r1: int, r2: int, p: int, n1: int, n2: int, n_obs: int, kind: str
) -> float:
    """-2 loglik + c_T phi with c_T = 2 (aic) or log(T) (bic).

    The criterion is defined on the objective without the Gaussian
    normalizing constant -((T-p) n1 n2 / 2) log(2 pi); the reported log
    likelihood includes it, so it is removed here.  The constant depends on
    the lag order through T-p, and leaving it in would hand longer lags an
    unearned head start of n1*n2*log(2*pi) per extra lag.
    """
    if kind == "aic":
        c = 2.0
    elif kind == "bic":
        c = math.log(n_obs)
    else:
        raise ValueError(f"criterion must be 'aic' or 'bic', got {kind!r}")
    bare = loglik + 0.5 * (n_obs - p) * n1 * n2 * math.log(2.0 * math.pi)
    return -2.0 * bare + c * phi(r1, r2, n1, n2, p)


@dataclass
class GridEntry:
    r1: int
    r2: int
    p: int
    loglik: float
    phi: int
    aic: float
    bic: float
    converged: bool
    grad_norm: float = math.nan
    n_starts_converged: int = 0
    nesting_flag: bool = False
    error: str | None = None


@dataclass
class SelectionGrid:
    n1: int
    n2: int
    n_obs: int
    entries: list[GridEntry]
    argmin_aic: tuple[int, int, int] | None
    argmin_bic: tuple[int, int, int] | None

    def entry(self, r1: int, r2: int, p: int) -> GridEntry:
        for e in self.entries:
            if (e.r1, e.r2, e.p) == (r1, r2, p):
                return e
        raise KeyError((r1, r2, p))

    def to_rows(self) -> list[dict]:
        return [
            {
                "r1": e.r1,
                "r2": e.r2,
                "p": e.p,
                "loglik": e.loglik,
                "phi": e.phi,
                "aic": e.aic,
                "bic": e.bic,
                "converged": e.converged,
            }
            for e in self.entries
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.DictWriter(
                handle, fieldnames=["r1", "r2", "p", "loglik", "phi", "aic", "bic", "converged"]
            )
            writer.writeheader()
            for row in self.to_rows():
                row["loglik"] = repr(row["loglik"])
                row["aic"] = repr(row["aic"])
                row["bic"] = repr(row["bic"])
                writer.writerow(row)

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "n1": self.n1,
            "n2": self.n2,
            "n_obs": self.n_obs,
            "entries": self.to_rows(),
            "argmin_aic": list(self.argmin_aic) if self.argmin_aic else None,
            "argmin_bic": list(self.argmin_bic) if self.argmin_bic else None,
        }

    def ranked_table(self, kind: str = "bic") -> str:
        key = {"aic": lambda e: e.aic, "bic": lambda e: e.bic}[kind]
        ok = [e for e in self.entries if e.converged]
        lines = [f"{'r1':>3} {'r2':>3} {'p':>3} {'loglik':>14} {'phi':>5} {kind:>12}"]
        for e in sorted(ok, key=key):
            lines.append(
                f"{e.r1:>3} {e.r2:>3} {e.p:>3} {e.loglik:>14.4f} {e.phi:>5} {key(e):>12.4f}"
            )
        return "\n".join(lines)


def cell_seed(seed: int, r1: int, r2: int, p: int) -> int:
    return int(np.random.SeedSequence([seed, r1, r2, p]).generate_state(1)[0])


def _fit_cell(args):
    values, n1, n2, r1, r2, p, config_fields = args
    dims = Dims(n1, n2, r1, r2, p)
    config = FitConfig(**config_fields)
    n_obs = values.shape[0]
    entry = GridEntry(
        r1=r1, r2=r2, p=p,
        loglik=math.nan, phi=phi(r1, r2, n1, n2, p),
        aic=math.nan, bic=math.nan, converged=False,
    )
    try:
        result = fit(LikelihoodData(values, dims), config=config)
    except (EstimationError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        entry.error = f"{type(exc).__name__}: {exc}"
        return entry
    entry.loglik = result.loglik
    entry.aic = information_criterion(result.loglik, r1, r2, p, n1, n2, n_obs, "aic")
    entry.bic = information_criterion(result.loglik, r1, r2, p, n1, n2, n_obs, "bic")
    entry.converged = True
    entry.grad_norm = result.diagnostics.grad_norm
    entry.n_starts_converged = result.diagnostics.n_starts_converged
    return entry


def _config_fields(config: FitConfig, seed: int) -> dict:
    return {
        "n_starts": config.n_starts,
        "keep": config.keep,
        "screen_iters": config.screen_iters,
        "tol": config.tol,
        "max_iters": config.max_iters,
        "seed": seed,
        "init_mode": config.init_mode,
    }


def check_nesting(entries: list[GridEntry], tol: float = 1e-4) -> list[tuple[int, int, int]]:
    """Flag cells whose likelihood falls below a nested (smaller-rank, same
    lag) cell by more than the optimizer-noise tolerance."""
    flagged = []
    ok = {(e.r1, e.r2, e.p): e for e in entries if e.converged}
    for e in entries:
        if not e.converged:
            continue
        for (r1, r2, p), small in ok.items():
            if p == e.p and r1 <= e.r1 and r2 <= e.r2 and (r1, r2) != (e.r1, e.r2):
                if e.loglik < small.loglik - tol:
                    e.nesting_flag = True
                    flagged.append((e.r1, e.r2, e.p))
                    break
    return flagged


DEFAULT_LAG_RANGE = (1, 3)


def select_ranks(
    data,
    n1: int,
    n2: int,
    rank_range: tuple[tuple[int, int], tuple[int, int]] | None = None,
    lag_range: tuple[int, int] = DEFAULT_LAG_RANGE,
    config: FitConfig | None = None,
    seed: int = 0,
    n_workers: int = 1,
) -> SelectionGrid:
    """Fit every candidate cell and tabulate both criteria.

    rank_range is ((r1_min, r1_max), (r2_min, r2_max)), defaulting to the
    full ranges, and lag_range defaults to 1..3; fixing a range to a single
    value gives the grid-slice robustness check (or fixed-lag selection).
    Cells are independent: each gets a seed derived from (seed, r1, r2, p)
    so results do not depend on execution order.
    """
    values = series_values(data)
    if values.shape[1] != n1 or values.shape[2] != n2:
        raise ValueError(f"data is {values.shape[1:]}, expected {(n1, n2)}")
    if rank_range is None:
        rank_range = ((1, n1), (1, n2))
    (r1_lo, r1_hi), (r2_lo, r2_hi) = rank_range
    p_lo, p_hi = lag_range
    if r1_lo > r1_hi or r2_lo > r2_hi or p_lo > p_hi or p_lo < 1:
        raise ValueError("empty candidate range")
    config = config or CELL_BUDGET

    cells = [
        (r1, r2, p)
        for p in range(p_lo, p_hi + 1)
        for r1 in range(r1_lo, r1_hi + 1)
        for r2 in range(r2_lo, r2_hi + 1)
    ]
    jobs = [
        (values, n1, n2, r1, r2, p, _config_fields(config, cell_seed(seed, r1, r2, p)))
        for (r1, r2, p) in cells
    ]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            entries = list(pool.map(_fit_cell, jobs))
    else:
        entries = [_fit_cell(job) for job in jobs]

    # a nesting violation means the larger cell under-optimized: retry once
    # with a doubled budget on a fresh seed substream
    for cell in check_nesting(entries):
        idx = cells.index(cell)
        r1, r2, p = cell
        retry_cfg = _config_fields(
            replace(config, n_starts=2 * config.n_starts, keep=2 * config.keep),
            cell_seed(seed + 1_000_003, r1, r2, p),
        )
        retry = _fit_cell((values, n1, n2, r1, r2, p, retry_cfg))
        if retry.converged and (
            not entries[idx].converged or retry.loglik > entries[idx].loglik
        ):
            entries[idx] = retry
    for e in entries:
        e.nesting_flag = False
    check_nesting(entries)

    usable = [e for e in entries if e.converged]
    if not usable:
        raise SelectionError("every candidate cell failed to fit")
    argmin_aic = min(usable, key=lambda e: (e.aic, e.r1, e.r2, e.p))
    argmin_bic = min(usable, key=lambda e: (e.bic, e.r1, e.r2, e.p))
    return SelectionGrid(
        n1=n1,
        n2=n2,
        n_obs=values.shape[0],
        entries=entries,
        argmin_aic=(argmin_aic.r1, argmin_aic.r2, argmin_aic.p),
        argmin_bic=(argmin_bic.r1, argmin_bic.r2, argmin_bic.p),
    )
