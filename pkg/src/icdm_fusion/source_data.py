"""Source data structures: binned MMRs counts and the DT CIR matrix.

Interval indices are 1-based and ascend with CIR, so interval 1 holds the
strongest interference. Neighbor rows are kept in lexicographic id order
until :func:`align_common_neighbors` moves the common cells to the top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_REPORTED_NEIGHBORS = 6

DEFAULT_EDGES = (-6.0, -3.0, 0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0)
DEFAULT_Q_THRESHOLD = 6

# CIR values are differences of 0.1 dB readings; rounding removes float dust
# that would otherwise flip a value sitting exactly on a bin edge.
_CIR_DECIMALS = 6


@dataclass(frozen=True)
class BinningConfig:
    """Q half-open CIR intervals separated by ``edges`` (dB)."""

    edges: tuple[float, ...] = DEFAULT_EDGES
    q_threshold: int = DEFAULT_Q_THRESHOLD

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 1:
            raise ValueError("binning needs at least one edge (Q >= 2)")
        if not all(math.isfinite(e) for e in edges):
            raise ValueError("binning edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"binning edges must be strictly increasing: {edges}")
        if not 1 <= self.q_threshold < self.Q:
            raise ValueError(
                f"q_threshold must satisfy 1 <= q_threshold < Q={self.Q}, got {self.q_threshold}"
            )

    @property
    def Q(self) -> int:
        return len(self.edges) + 1

    @property
    def cir_threshold(self) -> float:
        """dB value separating interval ``q_threshold`` from the next one."""
        return self.edges[self.q_threshold - 1]


@dataclass(frozen=True)
class MmrReport:
    serving_id: str
    serving_rxlev: float
    neighbors: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "neighbors", tuple((str(i), float(r)) for i, r in self.neighbors)
        )
        if len(self.neighbors) > MAX_REPORTED_NEIGHBORS:
            raise ValueError(
                f"an MMR carries at most {MAX_REPORTED_NEIGHBORS} neighbors, got {len(self.neighbors)}"
            )
        ids = [i for i, _ in self.neighbors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate neighbor ids in MMR: {ids}")


@dataclass(frozen=True)
class DtRecord:
    x: float
    y: float
    readings: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "readings", tuple((str(i), float(r)) for i, r in self.readings)
        )
        ids = [i for i, _ in self.readings]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate cell ids in DT record: {ids}")

    def rxlev(self, cell_id: str) -> float | None:
        for i, r in self.readings:
            if i == cell_id:
                return r
        return None


@dataclass(frozen=True, eq=False)
class MmrsVector:
    """Counts ``r[j, q]`` flattened at index ``j * Q + (q - 1)``."""

    serving_id: str
    neighbor_ids: tuple[str, ...]
    counts: np.ndarray
    total_reports: int
    Q: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "neighbor_ids", tuple(self.neighbor_ids))
        if counts.size != len(self.neighbor_ids) * self.Q:
            raise ValueError("counts length must equal J*Q")
        if (counts < 0).any():
            raise ValueError("MMRs counts must be nonnegative")

    @property
    def J(self) -> int:
        return len(self.neighbor_ids)

    def matrix(self) -> np.ndarray:
        """Counts reshaped to (J, Q)."""
        return self.counts.reshape(self.J, self.Q)

    def block(self, cell_id: str) -> np.ndarray:
        j = self.neighbor_ids.index(cell_id)
        return self.counts[j * self.Q:(j + 1) * self.Q]


@dataclass(frozen=True, eq=False)
class DtMatrix:
    """CIR (dB) of neighbor ``i`` in record ``m``; NaN marks "not detected"."""

    serving_id: str
    neighbor_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.neighbor_ids):
            raise ValueError("DT values must be an I x M matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "neighbor_ids", tuple(self.neighbor_ids))
        if values.shape[1] < 1:
            raise ValueError("a DT matrix needs at least one record")
        if np.isinf(values).any():
            raise ValueError("detected DT entries must be finite")

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.neighbor_ids)

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def detected(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True)
class CellIndexMap:
    """Row orders of both sources after alignment; the first ``n_common`` ids agree."""

    mmrs_ids: tuple[str, ...]
    dt_ids: tuple[str, ...]
    n_common: int

    @property
    def common_ids(self) -> tuple[str, ...]:
        return self.dt_ids[:self.n_common]

    @property
    def dt_only_ids(self) -> tuple[str, ...]:
        return self.dt_ids[self.n_common:]

    def dt_row(self, cell_id: str) -> int:
        return self.dt_ids.index(cell_id)


def cir(serving_rxlev: float, neighbor_rxlev: float) -> float:
    """Carrier-to-interference ratio in dB against a single neighbor."""
    return round(float(serving_rxlev) - float(neighbor_rxlev), _CIR_DECIMALS)


def bin_cir(value: float, binning: BinningConfig) -> int:
    """1-based interval index of ``value``; intervals are ``[lo, hi)``."""
    return int(np.searchsorted(binning.edges, value, side="right")) + 1


def bin_cir_array(values: np.ndarray, binning: BinningConfig) -> np.ndarray:
    """Vectorized :func:`bin_cir`; NaN entries map to 0."""
    values = np.asarray(values, dtype=float)
    q = np.searchsorted(binning.edges, values, side="right") + 1
    return np.where(np.isnan(values), 0, q).astype(np.int64)


def build_mmrs_vector(reports: Sequence[MmrReport], binning: BinningConfig,
                      serving_id: str | None = None) -> MmrsVector:
    serving_ids = {r.serving_id for r in reports}
    if len(serving_ids) > 1:
        raise ValueError(f"reports mix serving cells: {sorted(serving_ids)}")
    if serving_ids:
        serving_id = serving_ids.pop()
    neighbor_ids = sorted({i for r in reports for i, _ in r.neighbors})
    row = {cid: j for j, cid in enumerate(neighbor_ids)}
    Q = binning.Q
    counts = np.zeros(len(neighbor_ids) * Q, dtype=np.int64)
    for report in reports:
        for cid, rx in report.neighbors:
            q = bin_cir(cir(report.serving_rxlev, rx), binning)
            counts[row[cid] * Q + q - 1] += 1
    return MmrsVector(serving_id or "", tuple(neighbor_ids), counts, len(reports), Q)


def build_dt_matrix(records: Sequence[DtRecord], serving_id: str) -> DtMatrix:
    if not records:
        raise ValueError("no DT records")
    neighbor_ids = sorted({i for rec in records for i, _ in rec.readings if i != serving_id})
    row = {cid: i for i, cid in enumerate(neighbor_ids)}
    values = np.full((len(neighbor_ids), len(records)), np.nan)
    for m, rec in enumerate(records):
        serving = rec.rxlev(serving_id)
        if serving is None:
            raise ValueError(f"DT record {m} lacks a reading for serving cell {serving_id}")
        for cid, rx in rec.readings:
            if cid != serving_id:
                values[row[cid], m] = cir(serving, rx)
    return DtMatrix(serving_id, tuple(neighbor_ids), values)


def align_common_neighbors(mmrs: MmrsVector, dt: DtMatrix
                           ) -> tuple[MmrsVector, DtMatrix, CellIndexMap]:
    """Reorder both sources so the common neighbors come first, in the same order."""
    dt_set = set(dt.neighbor_ids)
    mmrs_set = set(mmrs.neighbor_ids)
    common = sorted(mmrs_set & dt_set)
    mmrs_order = common + sorted(mmrs_set - dt_set)
    dt_order = common + sorted(dt_set - mmrs_set)

    m_pos = [mmrs.neighbor_ids.index(c) for c in mmrs_order]
    mat = mmrs.matrix()[m_pos]
    new_mmrs = MmrsVector(mmrs.serving_id, tuple(mmrs_order), mat.reshape(-1),
                          mmrs.total_reports, mmrs.Q)
    d_pos = [dt.neighbor_ids.index(c) for c in dt_order]
    new_dt = DtMatrix(dt.serving_id, tuple(dt_order), dt.values[d_pos])
    return new_mmrs, new_dt, CellIndexMap(tuple(mmrs_order), tuple(dt_order), len(common))
