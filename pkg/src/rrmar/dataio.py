"""CSV ingestion and export for matrix-valued panels.

The on-disk format is a long CSV with header ``time,row,col,value``; rows
may appear in any order and the time axis follows first appearance.  Each
row label can carry a transform (none, diff, logdiff) applied before the
optional per-series demeaning.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .series import MatrixSeries

TRANSFORMS = ("none", "diff", "logdiff")
HEADER = ["time", "row", "col", "value"]


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """Where and how to read a panel: label orders fix the matrix layout,
    transforms are keyed by row label, demeaning is on by default."""

    path: str
    row_order: tuple[str, ...] = ()
    col_order: tuple[str, ...] = ()
    transforms: dict = field(default_factory=dict)
    demean: bool = True

    def __post_init__(self):
        for label, name in self.transforms.items():
            if name not in TRANSFORMS:
                raise IngestError(
                    f"unknown transform {name!r} for row {label!r}; pick from {TRANSFORMS}"
                )


def _read_long_csv(path: str):
    cells = {}
    times, rows, cols = [], [], []
    seen_t, seen_r, seen_c = set(), set(), set()
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise IngestError(f"{path}: expected header {','.join(HEADER)!r}, got {header}")
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != 4:
                raise IngestError(f"{path}:{lineno}: expected 4 fields, got {len(record)}")
            t, r, c, v = (x.strip() for x in record)
            try:
                value = float(v)
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: bad value {v!r}") from exc
            if not np.isfinite(value):
                raise IngestError(f"{path}:{lineno}: non-finite value at ({t}, {r}, {c})")
            if (t, r, c) in cells:
                raise IngestError(f"{path}: duplicate cell ({t}, {r}, {c})")
            cells[(t, r, c)] = value
            if t not in seen_t:
                seen_t.add(t)
                times.append(t)
            if r not in seen_r:
                seen_r.add(r)
                rows.append(r)
            if c not in seen_c:
                seen_c.add(c)
                cols.append(c)
    if not cells:
        raise IngestError(f"{path}: no data rows")
    return cells, times, rows, cols


def ingest(spec: DatasetSpec) -> MatrixSeries:
    """Read, complete-panel-check, pivot, transform, demean."""
    cells, times, rows, cols = _read_long_csv(spec.path)
    row_order = tuple(spec.row_order) if spec.row_order else tuple(rows)
    col_order = tuple(spec.col_order) if spec.col_order else tuple(cols)
    if sorted(row_order) != sorted(rows):
        raise IngestError(f"row_order {row_order} does not match file rows {tuple(rows)}")
    if sorted(col_order) != sorted(cols):
        raise IngestError(f"col_order {col_order} does not match file columns {tuple(cols)}")
    for label in spec.transforms:
        if label not in row_order:
            raise IngestError(f"transform given for unknown row {label!r}")

    t_len, n1, n2 = len(times), len(row_order), len(col_order)
    values = np.empty((t_len, n1, n2))
    for ti, t in enumerate(times):
        for ri, r in enumerate(row_order):
            for ci, c in enumerate(col_order):
                try:
                    values[ti, ri, ci] = cells[(t, r, c)]
                except KeyError:
                    raise IngestError(f"missing cell (time={t}, row={r}, col={c})") from None
    expected = t_len * n1 * n2
    if len(cells) != expected:
        raise IngestError(
            f"ragged panel: {len(cells)} cells, expected {expected} "
            f"({t_len} times x {n1} rows x {n2} cols)"
        )

    any_transform = any(spec.transforms.get(r, "none") != "none" for r in row_order)
    if any_transform:
        if t_len < 2:
            raise IngestError("transforms need at least two time points")
        out = np.empty((t_len - 1, n1, n2))
        for ri, r in enumerate(row_order):
            kind = spec.transforms.get(r, "none")
            x = values[:, ri, :]
            if kind == "none":
                out[:, ri, :] = x[1:]
            elif kind == "diff":
                out[:, ri, :] = np.diff(x, axis=0)
            else:  # logdiff
                if np.any(x <= 0.0):
                    ti, ci = np.argwhere(x <= 0.0)[0]
                    raise IngestError(
                        f"non-positive value under logdiff at "
                        f"(time={times[ti]}, row={r}, col={col_order[ci]})"
                    )
                out[:, ri, :] = np.diff(np.log(x), axis=0)
        values = out
        times = times[1:]

    if spec.demean:
        values = values - values.mean(axis=0, keepdims=True)

    return MatrixSeries(
        values=values,
        row_labels=row_order,
        col_labels=col_order,
        metadata={
            "source": spec.path,
            "times": list(times),
            "transforms": {r: spec.transforms.get(r, "none") for r in row_order},
            "demean": spec.demean,
        },
    )


def export_series(series: MatrixSeries, path: str) -> None:
    """Write the long CSV; floats at 17 significant digits so that
    ingest(export(s)) round-trips exactly."""
    t_len = series.n_obs
    times = series.metadata.get("times")
    if not times or len(times) != t_len:
        times = [f"t{i}" for i in range(t_len)]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HEADER)
        for ti in range(t_len):
            for ri, r in enumerate(series.row_labels):
                for ci, c in enumerate(series.col_labels):
                    writer.writerow([times[ti], r, c, repr(float(series.values[ti, ri, ci]))])


class ConfigError(ValueError):
    pass


_SECTION_KEYS = {
    "dataset": {"path", "row_order", "col_order", "transforms", "demean"},
    "fit": {"ranks", "lags", "n_starts", "keep", "screen_iters", "tol", "max_iters", "init_mode"},
    "select": {
        "r1_range", "r2_range", "lag_max", "criterion",
        "cell_starts", "cell_keep", "full_refit",
    },
    "simulate": {
        "n1", "n2", "r1", "r2", "p", "n_obs", "snr", "burn_in",
        "row_labels", "col_labels",
    },
    "mc": {
        "design", "n_obs", "replications", "lag_max", "n1", "n2", "r1", "r2", "p",
        "scenarios", "scenario_names", "fixed_truth", "factor_condition", "snr", "burn_in",
        "n_starts", "keep", "cell_starts", "cell_keep",
    },
}


def load_config(path: str | None) -> dict:
    """Strictly parsed JSON run configuration: unknown sections or keys are
    hard errors so typos cannot silently change a run."""
    if path is None:
        return {}
    import json

    with open(path) as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, content in raw.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        unknown = set(content) - _SECTION_KEYS[section]
        if unknown:
            raise ConfigError(
                f"{path}: unknown key(s) {sorted(unknown)} in section {section!r}"
            )
    return raw
