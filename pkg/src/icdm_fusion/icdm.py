"""ICDM rows and the metrics used to compare them.

An ICDM element estimates the probability that the CIR against a neighbor
lands in intervals ``1..q_threshold``. Rows are per serving cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np

from .source_data import BinningConfig, DtMatrix, MmrsVector, bin_cir_array

if TYPE_CHECKING:
    from .fusion import ReinforcedMmrs, ReshapedDt


@dataclass(frozen=True)
class Icdm:
    serving_id: str
    entries: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.entries.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"ICDM element {k}={v} outside [0, 1]")

    def __getitem__(self, cell_id: str) -> float:
        return self.entries[cell_id]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return list(self.entries)

    def support(self) -> set[str]:
        return {k for k, v in self.entries.items() if v > 0}


def icdm_from_mmrs(mmrs: Union[MmrsVector, "ReinforcedMmrs"], binning: BinningConfig,
                   per_neighbor: bool = False) -> Icdm:
    """Severe-interval share of each neighbor's MMR samples.

    The default denominator is the total report count, so a neighbor heard
    only in a lightly loaded corner gets a small element. ``per_neighbor``
    divides by that neighbor's own sample count instead.
    """
    if hasattr(mmrs, "combined"):
        mmrs = mmrs.combined()
    if mmrs.total_reports < 1:
        raise ValueError("cannot build an ICDM from zero MMR reports")
    if mmrs.Q != binning.Q:
        raise ValueError(f"MMRs vector has Q={mmrs.Q}, binning has Q={binning.Q}")
    mat = mmrs.matrix()
    severe = mat[:, :binning.q_threshold].sum(axis=1)
    if per_neighbor:
        denom = np.maximum(mat.sum(axis=1), 1)
    else:
        denom = np.full(mmrs.J, mmrs.total_reports)
    # per-neighbor counts can exceed total_reports only for fused blocks
    probs = np.minimum(severe / denom, 1.0)
    return Icdm(mmrs.serving_id, {cid: float(p) for cid, p in zip(mmrs.neighbor_ids, probs)})


def icdm_from_dt(dt: Union[DtMatrix, "ReshapedDt"], binning: BinningConfig) -> Icdm:
    """Fraction of DT records in which a neighbor is detected at severe CIR."""
    if hasattr(dt, "matrix"):
        dt = dt.matrix
    if dt.M < 1:
        raise ValueError("cannot build an ICDM from zero DT records")
    q = bin_cir_array(dt.values, binning)
    severe = ((q >= 1) & (q <= binning.q_threshold)).sum(axis=1)
    return Icdm(dt.serving_id, {cid: float(s) / dt.M for cid, s in zip(dt.neighbor_ids, severe)})


def _paired(a: Icdm, b: Icdm, union: bool) -> tuple[np.ndarray, np.ndarray]:
    if union:
        ids = sorted(set(a.entries) | set(b.entries))
    else:
        ids = sorted(set(a.entries) & set(b.entries))
    x = np.array([a.entries.get(i, 0.0) for i in ids])
    y = np.array([b.entries.get(i, 0.0) for i in ids])
    return x, y


def pearson(a: Icdm, b: Icdm, union: bool = False) -> float:
    """Pearson r over the neighbors both rows share (or their union, zero-filled)."""
    x, y = _paired(a, b, union)
    if x.size < 2:
        raise ValueError(f"pearson needs >= 2 common neighbors, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ValueError("pearson undefined for a constant series")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def im_error(estimate: Icdm, truth: Icdm) -> dict[str, float]:
    """Absolute error over the union of ids, missing entries read as 0.

    ``support_mismatch`` counts ids that are nonzero in exactly one row.
    """
    x, y = _paired(estimate, truth, union=True)
    if x.size == 0:
        return {"mae": 0.0, "max_ae": 0.0, "support_mismatch": 0}
    err = np.abs(x - y)
    return {
        "mae": float(err.mean()),
        "max_ae": float(err.max()),
        "support_mismatch": int(((x > 0) != (y > 0)).sum()),
    }
