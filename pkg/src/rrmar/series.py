"""Container for matrix-valued time series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MatrixSeries:
    """A length-T sequence of N1 x N2 real matrices.

    ``values`` has shape (T, N1, N2).  Row and column labels are optional
    and default to r1..rN1 / c1..cN2; ``metadata`` records provenance such
    as the ingest transform pipeline.
    """

    values: np.ndarray
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError(f"values must have shape (T, N1, N2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite entries")
        object.__setattr__(self, "values", v)
        if not self.row_labels:
            object.__setattr__(self, "row_labels", tuple(f"r{i + 1}" for i in range(v.shape[1])))
        if not self.col_labels:
            object.__setattr__(self, "col_labels", tuple(f"c{j + 1}" for j in range(v.shape[2])))
        if len(self.row_labels) != v.shape[1]:
            raise ValueError("row_labels length does not match N1")
        if len(self.col_labels) != v.shape[2]:
            raise ValueError("col_labels length does not match N2")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


def series_values(series) -> np.ndarray:
    """Accept a MatrixSeries or a (T, N1, N2) array and return the array."""
    if isinstance(series, MatrixSeries):
        return series.values
    v = np.asarray(series, dtype=float)
    if v.ndim != 3:
        raise ValueError(f"expected (T, N1, N2) data, got shape {v.shape}")
    return v
