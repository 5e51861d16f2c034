"""Command-line interface.

Subcommands: simulate, fit, select, decompose, mc.  Every command honors
--seed and writes deterministic artifacts (no timestamps; stable JSON key
order; floats at full precision), so identical invocations produce
byte-identical outputs.  Exit codes: 0 success, 1 usage/configuration
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .dataio import ConfigError, DatasetSpec, IngestError, export_series, ingest, load_config
from .estimate import (
    EstimationError,
    FitConfig,
    FitResult,
    comovement_report,
    fit,
    render_equations,
)
from .likelihood import LikelihoodData, ObservedInformation, packing_layout
from .model import Dims, PseudoStructParams, params_to_dict
from .montecarlo import (
    ExperimentError,
    ExperimentSpec,
    default_experiment,
    format_selection_table,
    kernel_density_export,
    run_experiment,
)
from .select import CELL_BUDGET, SelectionError, select_ranks
from .series import MatrixSeries
from .simulate import DgpError, DgpSpec, simulate_from_spec

USAGE_ERROR = 1
NUMERICAL_ERROR = 2

_NUMERICAL_ERRORS = (
    EstimationError,
    SelectionError,
    DgpError,
    ExperimentError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _jsonify(obj):
    """JSON-ready copy with NaN mapped to null."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w") as handle:
        json.dump(_jsonify(payload), handle, sort_keys=True, indent=2)
        handle.write("\n")


def _write_text(path, text) -> None:
    with open(path, "w") as handle:
        handle.write(text)
        if not text.endswith("\n"):
            handle.write("\n")


def _parse_pair(text: str, flag: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"{flag} expects two comma-separated integers, got {text!r}")
    return int(parts[0]), int(parts[1])


def _dataset_spec(args, config) -> DatasetSpec:
    section = dict(config.get("dataset", {}))
    path = args.data or section.get("path")
    if not path:
        raise ValueError("no input data: pass --data or set dataset.path in the config")
    return DatasetSpec(
        path=path,
        row_order=tuple(section.get("row_order", ())),
        col_order=tuple(section.get("col_order", ())),
        transforms=dict(section.get("transforms", {})),
        demean=bool(section.get("demean", True)),
    )


def _fit_config(args, config, defaults: FitConfig) -> FitConfig:
    section = dict(config.get("fit", {}))
    return FitConfig(
        n_starts=int(section.get("n_starts", defaults.n_starts)),
        keep=int(section.get("keep", defaults.keep)),
        screen_iters=int(section.get("screen_iters", defaults.screen_iters)),
        tol=float(section.get("tol", defaults.tol)),
        max_iters=int(section.get("max_iters", defaults.max_iters)),
        seed=args.seed,
        init_mode=str(section.get("init_mode", defaults.init_mode)),
    )


def _fit_payload(result: FitResult, series: MatrixSeries) -> dict:
    d = result.dims
    return {
        "schema": "v1",
        "dims": {"n1": d.n1, "n2": d.n2, "r1": d.r1, "r2": d.r2, "p": d.p},
        "n_obs": result.n_obs,
        "loglik": result.loglik,
        "params": params_to_dict(result.params),
        "se_delta": result.se_delta.tolist(),
        "se_gamma": result.se_gamma.tolist(),
        "cov_contemporaneous": result.cov_contemporaneous.tolist(),
        "row_labels": list(series.row_labels),
        "col_labels": list(series.col_labels),
        "diagnostics": {
            "grad_norm": result.diagnostics.grad_norm,
            "grad_norm_monitor": result.diagnostics.grad_norm_monitor,
            "hessian_min_eig": result.diagnostics.hessian_min_eig,
            "n_starts_converged": result.diagnostics.n_starts_converged,
            "chosen_start_id": result.diagnostics.chosen_start_id,
            "saddle_flag": result.diagnostics.saddle_flag,
        },
    }


def _nan_matrix(data, rows, cols) -> np.ndarray:
    arr = np.asarray(
        [[math.nan if v is None else float(v) for v in row] for row in data], dtype=float
    )
    return arr.reshape(rows, cols)


def fit_result_from_dict(payload: dict) -> tuple[FitResult, list[str], list[str]]:
    """Rebuild enough of a fit result from its JSON artifact to re-render
    reports; optimizer state is not restored."""
    from .model import params_from_dict

    d = Dims(**payload["dims"])
    params = params_from_dict(payload["params"])
    if not isinstance(params, PseudoStructParams):
        raise ValueError("fit artifact must carry pseudo-structural parameters")
    k = d.r1 * (d.n1 - d.r1) + d.r2 * (d.n2 - d.r2)
    cov = _nan_matrix(payload["cov_contemporaneous"], k, k)
    dummy = ObservedInformation(np.zeros((0, 0)), np.zeros((0, 0)), 0.0, False)
    result = FitResult(
        dims=d,
        theta=np.zeros(packing_layout(d).total),
        params=params,
        loglik=float(payload["loglik"]),
        info=dummy,
        se_delta=_nan_matrix(payload["se_delta"], d.r1, d.n1 - d.r1),
        se_gamma=_nan_matrix(payload["se_gamma"], d.r2, d.n2 - d.r2),
        cov_contemporaneous=cov,
        diagnostics=None,
        n_obs=int(payload["n_obs"]),
    )
    return result, list(payload["row_labels"]), list(payload["col_labels"])


def _report_artifacts(result: FitResult, row_labels, col_labels, out_dir: str) -> None:
    report = comovement_report(result, row_labels, col_labels)
    _write_text(os.path.join(out_dir, "equations.txt"), render_equations(report))
    payload = {
        "schema": "v1",
        "row_equations": [
            [{"label": t.label, "coefficient": t.coefficient, "se": t.se, "p_value": t.p_value}
             for t in eq]
            for eq in report.row_equations
        ],
        "column_equations": [
            [{"label": t.label, "coefficient": t.coefficient, "se": t.se, "p_value": t.p_value}
             for t in eq]
            for eq in report.column_equations
        ],
        "joint_equations": [
            [{"label": t.label, "coefficient": t.coefficient, "se": t.se, "p_value": t.p_value}
             for t in eq]
            for eq in report.joint_equations
        ],
    }
    _write_json(os.path.join(out_dir, "comovement.json"), payload)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("simulate", {}))
    n1, n2 = (int(section.get("n1", 3)), int(section.get("n2", 4)))
    r1, r2 = (int(section.get("r1", 2)), int(section.get("r2", 2)))
    p = int(section.get("p", 1))
    if args.dims:
        n1, n2 = _parse_pair(args.dims, "--dims")
    if args.ranks:
        r1, r2 = _parse_pair(args.ranks, "--ranks")
    if args.lags is not None:
        p = args.lags
    spec = DgpSpec(
        dims=Dims(n1, n2, r1, r2, p),
        n_obs=args.n_obs if args.n_obs is not None else int(section.get("n_obs", 250)),
        snr=float(section.get("snr", 0.7)),
        burn_in=int(section.get("burn_in", 50)),
        seed=args.seed,
    )
    params, series = simulate_from_spec(spec)
    labels = {
        "row_labels": tuple(section.get("row_labels", ())),
        "col_labels": tuple(section.get("col_labels", ())),
    }
    if labels["row_labels"] or labels["col_labels"]:
        series = MatrixSeries(
            values=series.values,
            row_labels=labels["row_labels"] or series.row_labels,
            col_labels=labels["col_labels"] or series.col_labels,
        )
    os.makedirs(args.out, exist_ok=True)
    export_series(series, os.path.join(args.out, "simulated.csv"))
    _write_json(os.path.join(args.out, "true_params.json"), params_to_dict(params))
    print(f"wrote {spec.n_obs} observations of a {n1}x{n2} series to {args.out}/simulated.csv")
    return 0


def cmd_fit(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("fit", {}))
    series = ingest(_dataset_spec(args, config))
    ranks = args.ranks or (
        ",".join(str(x) for x in section["ranks"]) if "ranks" in section else None
    )
    if not ranks:
        raise ValueError("fit needs --ranks r1,r2 (or fit.ranks in the config)")
    r1, r2 = _parse_pair(ranks, "--ranks")
    p = args.lags if args.lags is not None else int(section.get("lags", 1))
    dims = Dims(series.shape[0], series.shape[1], r1, r2, p)
    result = fit(LikelihoodData(series, dims), config=_fit_config(args, config, FitConfig()))
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "fit.json"), _fit_payload(result, series))
    _report_artifacts(result, series.row_labels, series.col_labels, args.out)
    print(
        f"fit ranks ({r1},{r2}) with {p} lag(s): loglik {result.loglik:.6f}, "
        f"artifacts in {args.out}"
    )
    return 0


def cmd_select(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("select", {}))
    series = ingest(_dataset_spec(args, config))
    n1, n2 = series.shape
    lag_max = args.lag_max if args.lag_max is not None else int(section.get("lag_max", 3))
    lag_min = 1
    if args.lags is not None:
        lag_min = lag_max = args.lags
    r1_range = tuple(section.get("r1_range", (1, n1)))
    r2_range = tuple(section.get("r2_range", (1, n2)))
    cell_config = FitConfig(
        n_starts=int(section.get("cell_starts", CELL_BUDGET.n_starts)),
        keep=int(section.get("cell_keep", CELL_BUDGET.keep)),
    )
    criterion = args.criterion or str(section.get("criterion", "bic"))
    if criterion not in ("aic", "bic"):
        raise ValueError(f"criterion must be aic or bic, got {criterion!r}")
    grid = select_ranks(
        series,
        n1,
        n2,
        rank_range=(r1_range, r2_range),
        lag_range=(lag_min, lag_max),
        config=cell_config,
        seed=args.seed,
        n_workers=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)
    grid.write_csv(os.path.join(args.out, "selection.csv"))
    _write_json(os.path.join(args.out, "selection.json"), grid.to_dict())
    chosen = grid.argmin_bic if criterion == "bic" else grid.argmin_aic
    r1, r2, p = chosen
    print(f"{criterion.upper()} selects ranks ({r1},{r2}) with {p} lags")
    print(grid.ranked_table(criterion))
    if bool(section.get("full_refit", True)):
        dims = Dims(n1, n2, r1, r2, p)
        result = fit(
            LikelihoodData(series, dims), config=_fit_config(args, config, FitConfig())
        )
        _write_json(os.path.join(args.out, "fit.json"), _fit_payload(result, series))
        _report_artifacts(result, series.row_labels, series.col_labels, args.out)
    return 0


def cmd_decompose(args) -> int:
    with open(args.fit) as handle:
        payload = json.load(handle)
    result, row_labels, col_labels = fit_result_from_dict(payload)
    os.makedirs(args.out, exist_ok=True)
    _report_artifacts(result, row_labels, col_labels, args.out)
    print(f"re-rendered equations for ranks ({result.dims.r1},{result.dims.r2}) in {args.out}")
    return 0


def _mc_spec(args, config) -> ExperimentSpec:
    section = dict(config.get("mc", {}))
    design = args.design or section.get("design")
    if not design:
        raise ValueError("mc needs --design (or mc.design in the config)")
    n_obs = args.n_obs if args.n_obs is not None else int(section.get("n_obs", 250))
    # replication defaults follow the studies: 1000 for the estimation and
    # coverage designs, 100 for the selection tables
    default_reps = 100 if design in ("rank_table", "rank_lag_table") else 1000
    reps = args.reps if args.reps is not None else int(section.get("replications", default_reps))
    base = default_experiment(design, n_obs=n_obs, replications=reps, seed=args.seed)
    dims = Dims(
        int(section.get("n1", base.dims.n1)), int(section.get("n2", base.dims.n2)),
        int(section.get("r1", base.dims.r1)), int(section.get("r2", base.dims.r2)),
        int(section.get("p", base.dims.p)),
    )
    return ExperimentSpec(
        design=base.design, dims=dims, n_obs=base.n_obs,
        replications=base.replications, seed=base.seed,
        scenarios=tuple(tuple(s) for s in section.get("scenarios", base.scenarios)),
        scenario_names=tuple(section.get("scenario_names", base.scenario_names)),
        lag_max=int(section.get("lag_max", base.lag_max)),
        fixed_truth=bool(section.get("fixed_truth", base.fixed_truth)),
        factor_condition=section.get("factor_condition", base.factor_condition),
        snr=float(section.get("snr", base.snr)),
        burn_in=int(section.get("burn_in", base.burn_in)),
        n_starts=int(section.get("n_starts", base.n_starts)),
        keep=int(section.get("keep", base.keep)),
        cell_starts=int(section.get("cell_starts", base.cell_starts)),
        cell_keep=int(section.get("cell_keep", base.cell_keep)),
    )


def cmd_mc(args) -> int:
    config = load_config(args.config)
    spec = _mc_spec(args, config)
    result = run_experiment(spec, n_workers=args.threads)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "result.json"), result.to_dict())
    if result.tables:
        table = format_selection_table(result)
        _write_text(os.path.join(args.out, "table.txt"), table)
        print(table)
    if result.scenarios:
        import csv as csvmod

        with open(os.path.join(args.out, "densities.csv"), "w", newline="") as handle:
            writer = csvmod.writer(handle)
            writer.writerow(["scenario", "coefficient", "x", "density"])
            for scen in result.scenarios:
                for k in range(scen.draws.shape[1]):
                    draws = scen.draws[:, k]
                    draws = draws[np.isfinite(draws)]
                    if draws.size < 10:
                        continue
                    kde = kernel_density_export(draws)
                    for x, dens in zip(kde.x, kde.density):
                        writer.writerow([scen.name, k, repr(float(x)), repr(float(dens))])
        with open(os.path.join(args.out, "coverage.csv"), "w", newline="") as handle:
            writer = csvmod.writer(handle)
            writer.writerow(["scenario", "coefficient", "coverage", "se"])
            for scen in result.scenarios:
                cov = scen.coverage
                se = scen.coverage_se
                for k in range(cov.shape[0]):
                    writer.writerow([scen.name, k, repr(float(cov[k])), repr(float(se[k]))])
        for scen in result.scenarios:
            cov = ", ".join(f"{c:.3f}" for c in scen.coverage)
            print(f"scenario {scen.name} (ranks {scen.ranks}): coverage [{cov}]")
    if result.runtime_seconds is not None:
        print(f"runtime: {result.runtime_seconds:.1f}s", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rrmar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="artifact directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        if data:
            p.add_argument("--data", default=None, help="long CSV (time,row,col,value)")

    p = sub.add_parser("simulate", help="simulate a reduced-rank matrix series")
    common(p)
    p.add_argument("--dims", default=None, help="n1,n2")
    p.add_argument("--ranks", default=None, help="r1,r2")
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--T", dest="n_obs", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit at fixed ranks")
    common(p, data=True)
    p.add_argument("--ranks", default=None, help="r1,r2")
    p.add_argument("--lags", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="rank/lag selection by information criteria")
    common(p, data=True)
    p.add_argument("--lags", type=int, default=None, help="fixed lag order")
    p.add_argument("--lag-max", dest="lag_max", type=int, default=None)
    p.add_argument("--criterion", choices=("aic", "bic"), default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("decompose", help="re-render equations from a saved fit")
    common(p)
    p.add_argument("--fit", required=True, help="fit.json artifact")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("mc", help="Monte Carlo experiment")
    common(p)
    p.add_argument("--design", default=None)
    p.add_argument("--T", dest="n_obs", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestError, ValueError, FileNotFoundError) as exc:
        print(f"rrmar: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except _NUMERICAL_ERRORS as exc:
        print(f"rrmar: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
