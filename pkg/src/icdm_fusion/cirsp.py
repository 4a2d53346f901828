"""CIR spectrum profiles of DT records and the one-hot SP matrix built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .source_data import MAX_REPORTED_NEIGHBORS, BinningConfig, DtMatrix, bin_cir_array


@dataclass(frozen=True, eq=False)
class Cirsp:
    """Per-neighbor interval index (1..Q) for the strongest neighbors, 0 elsewhere."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if np.count_nonzero(values) > MAX_REPORTED_NEIGHBORS:
            raise ValueError("a CIRSP keeps at most 6 nonzero elements")
        if (values < 0).any():
            raise ValueError("CIRSP elements must be >= 0")

    def __eq__(self, other):
        return isinstance(other, Cirsp) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class SpMatrix:
    """Binary (I*Q, M) matrix; row ``i*Q + q - 1`` is neighbor i in interval q."""

    data: np.ndarray
    neighbor_ids: tuple[str, ...]
    Q: int

    @property
    def M(self) -> int:
        return self.data.shape[1]

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.neighbor_ids)


def derive_cirsp(dt_column: np.ndarray, binning: BinningConfig,
                 ids: Sequence[str] | None = None) -> Cirsp:
    """Keep the interval index of the 6 strongest detected neighbors.

    Strongest means lowest CIR against the serving cell. Equal CIRs are
    ordered by cell id when ``ids`` is given, else by row.
    """
    col = np.asarray(dt_column, dtype=float)
    det = np.flatnonzero(~np.isnan(col))
    if ids is None:
        rank = np.arange(col.size)
    else:
        rank = np.argsort(np.argsort(np.asarray(ids, dtype=object), kind="stable"), kind="stable")
    order = det[np.lexsort((rank[det], col[det]))][:MAX_REPORTED_NEIGHBORS]
    values = np.zeros(col.size, dtype=np.int64)
    values[order] = bin_cir_array(col[order], binning)
    return Cirsp(values)


def to_sp_vector(cirsp: Cirsp, binning: BinningConfig) -> np.ndarray:
    Q = binning.Q
    if cirsp.values.max(initial=0) > Q:
        raise ValueError(f"CIRSP element exceeds Q={Q}")
    s = np.zeros(cirsp.values.size * Q, dtype=np.uint8)
    rows = np.flatnonzero(cirsp.values)
    s[rows * Q + cirsp.values[rows] - 1] = 1
    return s


def sp_vector_to_cirsp(s: np.ndarray, Q: int) -> Cirsp:
    blocks = np.asarray(s).reshape(-1, Q)
    values = np.where(blocks.any(axis=1), blocks.argmax(axis=1) + 1, 0)
    return Cirsp(values)


def build_sp_matrix(dt: DtMatrix, binning: BinningConfig) -> SpMatrix:
    cols = [
        to_sp_vector(derive_cirsp(dt.values[:, m], binning, dt.neighbor_ids), binning)
        for m in range(dt.M)
    ]
    data = np.column_stack(cols) if dt.I else np.zeros((0, dt.M), dtype=np.uint8)
    return SpMatrix(data, dt.neighbor_ids, binning.Q)
